//! Training loop with class-weighted loss, early stopping and best-model
//! retention, plus evaluation metrics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::augment::{augment_sample, AugmentError, AugmentPolicy};
use crate::data::{
    compute_class_weights, epoch_order, stratified_subset, Batch, DataError, DatasetSplit, CLASS_NAMES,
};
use crate::loss::{weighted_softmax_cross_entropy, ClassWeights, LossError};
use crate::nn::{Mode, Model, NnError};
use crate::optim::{OptimError, Optimizer, OptimizerConfig};
use crate::rng::{streams, Rng};
use crate::tensor::TensorError;
use crate::NUM_CLASSES;

/// Smallest change in the monitored value that counts as an improvement.
pub const MIN_DELTA: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    ValLoss,
    ValAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

impl Monitor {
    pub fn name(self) -> &'static str {
        match self {
            Monitor::ValLoss => "val_loss",
            Monitor::ValAccuracy => "val_accuracy",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Monitor::ValLoss => Direction::Min,
            Monitor::ValAccuracy => Direction::Max,
        }
    }

    pub fn value(self, record: &EpochRecord) -> f64 {
        match self {
            Monitor::ValLoss => record.val_loss,
            Monitor::ValAccuracy => record.val_accuracy,
        }
    }
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Monitor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "val_loss" => Ok(Monitor::ValLoss),
            "val_accuracy" => Ok(Monitor::ValAccuracy),
            _ => Err(format!("unknown monitor '{s}' (expected val_loss or val_accuracy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// `N / (K · n_c)` from the training split's class counts.
    #[default]
    Balanced,
    None,
}

impl FromStr for ClassWeighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "balanced" => Ok(ClassWeighting::Balanced),
            "none" => Ok(ClassWeighting::None),
            _ => Err(format!("unknown class weighting '{s}' (expected balanced or none)")),
        }
    }
}

impl fmt::Display for ClassWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassWeighting::Balanced => "balanced",
            ClassWeighting::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
    /// Stratified fraction of both the training and validation splits.
    pub subset_fraction: f64,
    /// `None` disables augmentation.
    pub augment: Option<AugmentPolicy>,
    pub class_weighting: ClassWeighting,
    /// Store wall-clock seconds in the history. Off by default so that a
    /// repeated run reproduces the history byte for byte.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            patience: 10,
            monitor: Monitor::ValLoss,
            seed: 0,
            subset_fraction: 1.0,
            augment: Some(AugmentPolicy::default()),
            class_weighting: ClassWeighting::Balanced,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.patience == 0 || self.patience > self.epochs {
            return bad(format!(
                "patience must lie in 1..={} (the epoch count), got {}",
                self.epochs, self.patience
            ));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return bad(format!("subset fraction must lie in (0, 1], got {}", self.subset_fraction));
        }
        self.optimizer.validate()?;
        if let Some(policy) = &self.augment {
            policy.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// One early-stopping step. Returns the decision with the updated best value
/// and staleness count.
pub fn early_stop_update(
    best: f64,
    current: f64,
    stale_epochs: usize,
    patience: usize,
    direction: Direction,
) -> (StopDecision, f64, usize) {
    let improved = match direction {
        Direction::Min => current < best - MIN_DELTA,
        Direction::Max => current > best + MIN_DELTA,
    };
    let (best, stale) = if improved {
        (current, 0)
    } else {
        (best, stale_epochs + 1)
    };
    let decision = if stale >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    };
    (decision, best, stale)
}

/// Tracks the monitored value across epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    direction: Direction,
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(direction: Direction, patience: usize) -> Self {
        let best = match direction {
            Direction::Min => f64::INFINITY,
            Direction::Max => f64::NEG_INFINITY,
        };
        Self {
            direction,
            patience,
            best,
            stale: 0,
        }
    }

    /// Feeds one value; returns whether it improved and whether to stop.
    pub fn update(&mut self, current: f64) -> (bool, StopDecision) {
        let (decision, best, stale) =
            early_stop_update(self.best, current, self.stale, self.patience, self.direction);
        let improved = stale == 0;
        self.best = best;
        self.stale = stale;
        (improved, decision)
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// 7×7 counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[usize], predictions: &[usize]) -> Self {
        assert_eq!(labels.len(), predictions.len());
        let mut cm = Self::default();
        for (&t, &p) in labels.iter().zip(predictions) {
            cm.counts[t][p] += 1;
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("true\\predicted,{}\n", CLASS_NAMES.join(","));
        for (name, row) in CLASS_NAMES.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` when the class was never predicted.
    pub precision: [Option<f64>; NUM_CLASSES],
    /// `None` when the class never occurs.
    pub recall: [Option<f64>; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
    /// Mean unweighted cross-entropy.
    pub loss: f64,
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix, loss: f64) -> Self {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let mut precision = [None; NUM_CLASSES];
        let mut recall = [None; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let predicted: u64 = (0..NUM_CLASSES).map(|t| confusion.counts[t][c]).sum();
            let actual: u64 = confusion.counts[c].iter().sum();
            precision[c] = ratio(confusion.counts[c][c], predicted);
            recall[c] = ratio(confusion.counts[c][c], actual);
        }
        Self {
            accuracy: ratio(confusion.trace(), confusion.total()).unwrap_or(0.0),
            precision,
            recall,
            confusion,
            loss,
        }
    }

    pub fn report(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "   n/a".to_string(), |v| format!("{v:.4}"));
        let mut out = format!(
            "accuracy {:.4} ({} of {})\nloss {:.4}\nclass     precision  recall\n",
            self.accuracy,
            self.confusion.trace(),
            self.confusion.total(),
            self.loss
        );
        for (c, name) in CLASS_NAMES.iter().enumerate() {
            out.push_str(&format!(
                "{name:<9} {:>9}  {:>6}\n",
                fmt(self.precision[c]),
                fmt(self.recall[c])
            ));
        }
        out
    }
}

/// Infer-mode accuracy, per-class precision/recall, confusion matrix and
/// unweighted loss over a split.
pub fn evaluate(model: &Model, split: &DatasetSplit, batch_size: usize) -> Result<Metrics> {
    if split.is_empty() {
        return Err(DataError::EmptySplit(split.usage).into());
    }
    if batch_size == 0 {
        return Err(DataError::InvalidBatchSize.into());
    }
    let uniform = ClassWeights::uniform(NUM_CLASSES);
    let order: Vec<usize> = (0..split.len()).collect();
    let mut predictions = Vec::with_capacity(split.len());
    let mut loss_sum = 0.0;
    for chunk in order.chunks(batch_size) {
        let batch = Batch::gather(split, chunk);
        let logits = model.infer_logits(&batch.images)?;
        let (loss, _) = weighted_softmax_cross_entropy(&logits, &batch.labels, &uniform)?;
        loss_sum += loss * chunk.len() as f64;
        predictions.extend(logits.argmax_axis(1)?);
    }
    let confusion = ConfusionMatrix::from_predictions(&split.labels(), &predictions);
    Ok(Metrics::from_confusion(confusion, loss_sum / split.len() as f64))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model from the best epoch under the configured monitor.
    pub best_model: Model,
    pub best_epoch: usize,
    pub best_by_loss: (usize, Model),
    pub best_by_accuracy: (usize, Model),
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub steps: usize,
}

/// Per-epoch progress callback: the record and the measured wall time.
pub type Observer<'a> = &'a mut dyn FnMut(&EpochRecord, Duration);

/// Shuffle seed for one epoch.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    Rng::stream(seed, &[streams::SHUFFLE, epoch as u64]).next_u64()
}

/// Trains `model` on `training`, evaluating on `validation` after every epoch.
pub fn train(
    mut model: Model,
    training: &DatasetSplit,
    validation: &DatasetSplit,
    config: &TrainConfig,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (training, validation) = if config.subset_fraction < 1.0 {
        (
            stratified_subset(training, config.subset_fraction, config.seed)?,
            stratified_subset(validation, config.subset_fraction, config.seed)?,
        )
    } else {
        (training.clone(), validation.clone())
    };
    if training.is_empty() {
        return Err(DataError::EmptySplit(training.usage).into());
    }
    if validation.is_empty() {
        return Err(DataError::EmptySplit(validation.usage).into());
    }
    if model.has_per_feature_batchnorm() && training.len() % config.batch_size == 1 {
        return Err(TrainError::Config(format!(
            "{} training samples with batch size {} leave a final batch of one sample, \
             which batch normalization cannot train on; choose another batch size",
            training.len(),
            config.batch_size
        )));
    }
    let weights = match config.class_weighting {
        ClassWeighting::Balanced => compute_class_weights(&training.class_counts())?,
        ClassWeighting::None => ClassWeights::uniform(NUM_CLASSES),
    };
    let mut optimizer = Optimizer::<f32>::new(config.optimizer)?;
    let mut observer = observer;

    let mut stopper = EarlyStopping::new(config.monitor.direction(), config.patience);
    let mut loss_tracker = EarlyStopping::new(Direction::Min, usize::MAX);
    let mut acc_tracker = EarlyStopping::new(Direction::Max, usize::MAX);
    let mut best: Option<(usize, Model)> = None;
    let mut best_by_loss: Option<(usize, Model)> = None;
    let mut best_by_accuracy: Option<(usize, Model)> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut steps = 0;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let order = epoch_order(training.len(), epoch_seed(config.seed, epoch), true);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::gather_with(&training, chunk, |index, sample| match &config.augment {
                Some(policy) => augment_sample(&sample.pixels, policy, config.seed, epoch, index),
                None => Ok(sample.pixels.clone()),
            })?;
            let mut dropout_rng = Rng::stream(
                config.seed,
                &[streams::DROPOUT, epoch as u64, batch_index as u64],
            );
            let diverged = |detail: String| TrainError::NonFinite {
                epoch,
                batch: batch_index + 1,
                detail,
            };
            let pass = model
                .forward(&batch.images, Mode::Train, &mut dropout_rng)
                .map_err(|e| match e {
                    NnError::Tensor(t) => diverged(t.to_string()),
                    other => other.into(),
                })?;
            let (loss, dlogits) = weighted_softmax_cross_entropy(&pass.logits, &batch.labels, &weights)
                .map_err(|e| match e {
                    LossError::NonFinite => diverged("loss is not finite".into()),
                    other => other.into(),
                })?;
            let caches = pass.caches.as_ref().expect("train-mode pass keeps caches");
            let grads = model.backward(caches, &dlogits)?;
            optimizer
                .step(&mut model.params_mut(), &grads)
                .map_err(|e| match e {
                    OptimError::NonFiniteGradient { .. } | OptimError::NonFiniteParameter { .. } => diverged(e.to_string()),
                    other => other.into(),
                })?;
            steps += 1;
            loss_sum += loss * chunk.len() as f64;
            correct += pass
                .probs
                .argmax_axis(1)?
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
        }

        let val = evaluate(&model, &validation, config.batch_size)?;
        let elapsed = started.elapsed();
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / training.len() as f64,
            train_accuracy: correct as f64 / training.len() as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            seconds: if config.record_timing {
                elapsed.as_secs_f64()
            } else {
                0.0
            },
        };
        history.push(record);
        if let Some(observer) = observer.as_mut() {
            observer(&record, elapsed);
        }

        if loss_tracker.update(record.val_loss).0 {
            best_by_loss = Some((epoch, model.clone()));
        }
        if acc_tracker.update(record.val_accuracy).0 {
            best_by_accuracy = Some((epoch, model.clone()));
        }
        let (improved, decision) = stopper.update(config.monitor.value(&record));
        if improved {
            best = Some((epoch, model.clone()));
        }
        if decision == StopDecision::Stop {
            stopped_early = epoch < config.epochs;
            break;
        }
    }

    // A first epoch always improves on the infinite starting value, so every
    // tracker holds a model unless the monitored values were NaN.
    let fallback = || (history.len(), model.clone());
    let (best_epoch, best_model) = best.unwrap_or_else(fallback);
    Ok(TrainOutcome {
        best_model,
        best_epoch,
        best_by_loss: best_by_loss.unwrap_or_else(fallback),
        best_by_accuracy: best_by_accuracy.unwrap_or_else(fallback),
        history,
        stopped_early,
        steps,
    })
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,seconds";

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.seconds
        ));
    }
    out
}

pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, history_to_csv(history))
}

pub fn parse_history_csv(text: &str) -> std::result::Result<Vec<EpochRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err("missing history header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || format!("line {}: malformed history row", i + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(f[1])?,
                train_accuracy: num(f[2])?,
                val_loss: num(f[3])?,
                val_accuracy: num(f[4])?,
                seconds: num(f[5])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_split, Usage};
    use crate::nn::Preset;

    #[test]
    fn early_stop_examples() {
        let mut stopper = EarlyStopping::new(Direction::Min, 3);
        for i in 0..100 {
            assert_eq!(stopper.update(100.0 - i as f64), (true, StopDecision::Continue));
        }

        let decisions: Vec<StopDecision> = (0..3).map(|s| early_stop_update(1.0, 1.0, s, 3, Direction::Min).0).collect();
        assert_eq!(decisions, [StopDecision::Continue, StopDecision::Continue, StopDecision::Stop]);

        let (_, best, stale) = early_stop_update(1.0, 1.0 - 1e-7, 0, 3, Direction::Min);
        assert_eq!((best, stale), (1.0, 1));
        let (_, best, stale) = early_stop_update(0.5, 0.6, 2, 3, Direction::Max);
        assert_eq!((best, stale), (0.6, 0));
    }

    #[test]
    fn metrics_hand_tabulated() {
        let m = Metrics::from_confusion(ConfusionMatrix::from_predictions(&[0, 0, 1], &[0, 1, 1]), 0.0);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall[0], Some(0.5));
        assert_eq!(m.recall[1], Some(1.0));
        assert_eq!(m.precision[1], Some(0.5));
        assert_eq!(m.precision[0], Some(1.0));
        assert_eq!(m.precision[2], None);
        assert_eq!(m.recall[2], None);
        assert_eq!(m.confusion.total(), 3);
    }

    #[test]
    fn constant_happy_baseline() {
        let mut labels = Vec::new();
        for (c, &n) in crate::data::FER2013_CLASS_COUNTS.iter().enumerate() {
            labels.extend(std::iter::repeat_n(c, n));
        }
        let predictions = vec![3; labels.len()];
        let m = Metrics::from_confusion(ConfusionMatrix::from_predictions(&labels, &predictions), 0.0);
        assert!((m.accuracy - 8989.0 / 35887.0).abs() < 1e-15);
        assert!((m.accuracy - 0.2505).abs() < 1e-4);
    }

    #[test]
    fn confusion_csv_layout() {
        let csv = ConfusionMatrix::from_predictions(&[0, 6], &[0, 3]).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[0], "true\\predicted,angry,disgust,fear,happy,sad,surprise,neutral");
        assert_eq!(lines[1], "angry,1,0,0,0,0,0,0");
        assert_eq!(lines[7], "neutral,0,0,0,1,0,0,0");
    }

    #[test]
    fn history_csv() {
        assert_eq!(history_to_csv(&[]), format!("{HISTORY_HEADER}\n"));
        let records = vec![
            EpochRecord {
                epoch: 1,
                train_loss: 1.9459101,
                train_accuracy: 0.25,
                val_loss: 1.8,
                val_accuracy: 1.0 / 3.0,
                seconds: 0.0,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 1.2,
                train_accuracy: 0.5,
                val_loss: 1.7,
                val_accuracy: 0.4,
                seconds: 12.5,
            },
        ];
        let text = history_to_csv(&records);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_history_csv(&text).unwrap(), records);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err(), "patience above epochs");
        c.patience = 5;
        assert!(c.validate().is_ok());
        c.subset_fraction = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn steps_per_epoch_and_best_model() {
        let training = synthetic_split(Usage::Training, 3, 0.1, 1);
        let validation = synthetic_split(Usage::PublicTest, 1, 0.1, 1);
        let model = Model::preset(Preset::FerTiny, &mut Rng::new(0)).unwrap();
        let config = TrainConfig {
            epochs: 3,
            patience: 3,
            batch_size: 6,
            augment: None,
            ..TrainConfig::default()
        };
        let outcome = train(model, &training, &validation, &config, None).unwrap();
        assert_eq!(outcome.history.len(), 3);
        assert_eq!(outcome.steps, 3 * 21usize.div_ceil(6));
        let best = outcome
            .history
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .unwrap();
        assert_eq!(outcome.best_epoch, best.epoch);
        let replay = evaluate(&outcome.best_model, &validation, 6).unwrap();
        assert_eq!(replay.loss, best.val_loss);
    }

    #[test]
    fn singleton_final_batch_is_rejected() {
        let training = synthetic_split(Usage::Training, 1, 0.1, 1);
        let validation = synthetic_split(Usage::PublicTest, 1, 0.1, 1);
        let model = Model::preset(Preset::FerTiny, &mut Rng::new(0)).unwrap();
        let config = TrainConfig {
            epochs: 1,
            patience: 1,
            batch_size: 6,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(model, &training, &validation, &config, None),
            Err(TrainError::Config(_))
        ));
    }
}
