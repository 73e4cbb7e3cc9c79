//! Class-weighted softmax cross-entropy, fused with the softmax so the loss
//! is computed from logits through log-sum-exp.

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{labels} labels for {rows} logit rows")]
    BatchMismatch { rows: usize, labels: usize },
    #[error("{weights} class weights for {classes} classes")]
    WeightCount { weights: usize, classes: usize },
    #[error("class weights must be positive and finite, got {0:?}")]
    InvalidWeights(Vec<f64>),
    #[error("logits must be a [batch, classes] matrix, got shape {0:?}")]
    LogitsRank(Vec<usize>),
    #[error("loss is not finite")]
    NonFinite,
}

/// One positive multiplier per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    weights: Vec<f64>,
}

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, LossError> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(LossError::InvalidWeights(weights));
        }
        Ok(Self { weights })
    }

    pub fn uniform(classes: usize) -> Self {
        Self {
            weights: vec![1.0; classes],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, class: usize) -> f64 {
        self.weights[class]
    }
}

/// Mean over the batch of `w_y · (logsumexp(z) − z_y)`, and its gradient
/// `(w_y / batch) · (softmax(z) − onehot(y))` with respect to the logits.
pub fn weighted_softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<(f64, Tensor<T>), LossError> {
    let [rows, classes] = *logits.shape() else {
        return Err(LossError::LogitsRank(logits.shape().to_vec()));
    };
    if labels.len() != rows {
        return Err(LossError::BatchMismatch {
            rows,
            labels: labels.len(),
        });
    }
    if weights.weights.len() != classes {
        return Err(LossError::WeightCount {
            weights: weights.weights.len(),
            classes,
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(LossError::LabelOutOfRange { label, classes });
    }

    let batch = T::from_usize(rows).unwrap();
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
        let w = T::from_f64_lossy(weights.weights[label]);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum_exp: T = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += w * (lse - row[label]);
        let scale = w / batch;
        grad.extend(row.iter().enumerate().map(|(c, &z)| {
            let p = (z - lse).exp();
            let target = if c == label { T::one() } else { T::zero() };
            scale * (p - target)
        }));
    }
    let loss = (total / batch).to_f64_lossy();
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(LossError::NonFinite);
    }
    Ok((loss, Tensor::from_parts(logits.shape().to_vec(), grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut z = vec![-100.0; 7];
        z[2] = 100.0;
        let logits = Tensor::<f64>::new(&[1, 7], z).unwrap();
        let (loss, _) = weighted_softmax_cross_entropy(&logits, &[2], &ClassWeights::uniform(7)).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_ln_seven() {
        let logits = Tensor::<f64>::zeros(&[3, 7]).unwrap();
        let (loss, _) =
            weighted_softmax_cross_entropy(&logits, &[0, 3, 6], &ClassWeights::uniform(7)).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        assert!((loss - 1.945910).abs() < 1e-6);

        let mut w = vec![1.0; 7];
        w[1] = 9.3724;
        let weights = ClassWeights::new(w).unwrap();
        let (loss, _) = weighted_softmax_cross_entropy(&logits.reshape(&[3, 7]).unwrap(), &[1, 1, 1], &weights)
            .unwrap();
        assert!((loss - 9.3724 * 7f64.ln()).abs() < 1e-9);
        assert!((loss - 18.2379).abs() < 1e-4);
    }

    #[test]
    fn unit_weights_equal_plain_cross_entropy() {
        let logits = Tensor::<f64>::sample_normal(&mut Rng::new(3), &[5, 7], 0.0, 2.0).unwrap();
        let labels = [0, 6, 3, 3, 1];
        let (loss, _) = weighted_softmax_cross_entropy(&logits, &labels, &ClassWeights::uniform(7)).unwrap();
        let probs = crate::nn::softmax(&logits).unwrap();
        let plain: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs.data()[i * 7 + y].ln())
            .sum::<f64>()
            / 5.0;
        assert!((loss - plain).abs() < 1e-12);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Tensor::<f32>::sample_normal(&mut Rng::new(9), &[4, 7], 0.0, 3.0).unwrap();
        let weights = ClassWeights::new(vec![1.0, 9.0, 1.1, 0.6, 0.8, 1.3, 0.8]).unwrap();
        let (_, grad) = weighted_softmax_cross_entropy(&logits, &[1, 2, 3, 4], &weights).unwrap();
        for row in grad.data().chunks(7) {
            assert!(row.iter().sum::<f32>().abs() <= 1e-6);
        }
    }

    #[test]
    fn errors() {
        let logits = Tensor::<f32>::zeros(&[2, 7]).unwrap();
        let w = ClassWeights::uniform(7);
        assert!(matches!(
            weighted_softmax_cross_entropy(&logits, &[0, 7], &w),
            Err(LossError::LabelOutOfRange { label: 7, .. })
        ));
        assert!(matches!(
            weighted_softmax_cross_entropy(&logits, &[0], &w),
            Err(LossError::BatchMismatch { .. })
        ));
        assert!(ClassWeights::new(vec![1.0, 0.0]).is_err());
    }
}
