//! Central finite-difference gradient checking.
//!
//! Uses only forward evaluations, so it stays independent of the analytic
//! backward passes it is used to verify.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::loss::{weighted_softmax_cross_entropy, ClassWeights, LossError};
use crate::nn::{Layer, LayerCache, Mode, Model, NnError};
use crate::rng::{streams, Rng};
use crate::tensor::{Tensor, TensorError};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Largest accepted relative error in 64-bit mode.
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Denominator floor for relative errors, per unit of objective magnitude:
/// below it the comparison is effectively absolute. At `h = 1e-5` the
/// rounding noise of a central difference over an objective that sums a few
/// thousand terms reaches about `2e-10·|f|`, which this floor keeps under the
/// tolerance.
pub const REL_FLOOR: f64 = 1e-3;

/// Rounding noise in a central difference grows like `ε·|f| / h`, so the
/// floor scales with the objective value (but never drops below
/// [`REL_FLOOR`]).
pub fn error_floor(objective: f64) -> f64 {
    REL_FLOOR * objective.abs().max(1.0)
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a non-differentiable point.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: Self) -> Self {
        Self {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tolerance
    }
}

/// `(f(x + h) − f(x − h)) / 2h`, or `None` when either evaluation is rejected.
pub fn central_difference(h: f64, mut f: impl FnMut(f64) -> Option<f64>) -> Option<f64> {
    let plus = f(h)?;
    let minus = f(-h)?;
    Some((plus - minus) / (2.0 * h))
}

/// Compares `analytic[i]` against a central difference for every index in
/// `coords`. `eval(i, delta)` returns the objective with coordinate `i`
/// shifted by `delta`, or `None` to skip the coordinate.
pub fn check_coordinates(
    coords: impl IntoIterator<Item = usize>,
    analytic: &[f64],
    h: f64,
    floor: f64,
    mut eval: impl FnMut(usize, f64) -> Option<f64>,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for i in coords {
        match central_difference(h, |delta| eval(i, delta)) {
            Some(numeric) => {
                report.checked += 1;
                report.max_rel_error = report.max_rel_error.max(relative_error(analytic[i], numeric, floor));
            }
            None => report.skipped += 1,
        }
    }
    report
}

fn fingerprint(caches: &[LayerCache<f64>]) -> u64 {
    let mut hasher = DefaultHasher::new();
    for cache in caches {
        cache.hash_pattern(&mut hasher);
    }
    hasher.finish()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks one layer's backward pass against central differences of
/// `Σ r ⊙ layer(x)` for a fixed random `r`, in every input element and
/// every parameter. Dropout draws the same mask on every evaluation;
/// perturbations that flip a ReLU mask or pooling argmax are skipped.
pub fn check_layer(layer: &Layer<f64>, input: &Tensor<f64>, mode: Mode, seed: u64) -> Result<GradCheckReport, GradCheckError> {
    let run = |layer: &Layer<f64>, x: &Tensor<f64>| {
        let mut layer = layer.clone();
        layer.forward(x, mode, &mut Rng::stream(seed, &[streams::DROPOUT]))
    };
    let (y, cache) = run(layer, input)?;
    let pattern = fingerprint(std::slice::from_ref(&cache));
    let scale = 1.0 / (y.len() as f64).sqrt();
    let r = Tensor::<f64>::sample_normal(&mut Rng::stream(seed, &[0x9c]), y.shape(), 0.0, scale)?;
    let (dx, dparams) = layer.backward(&cache, &r)?;

    let objective = |layer: &Layer<f64>, x: &Tensor<f64>| {
        let (y, cache) = run(layer, x).ok()?;
        (fingerprint(std::slice::from_ref(&cache)) == pattern).then(|| dot(&y, &r))
    };
    let floor = error_floor(dot(&y, &r));
    let mut report = check_coordinates(0..input.len(), dx.data(), STEP, floor, |i, delta| {
        let mut x = input.clone();
        x.data_mut()[i] += delta;
        objective(layer, &x)
    });
    for (p, grad) in dparams.iter().enumerate() {
        report = report.merge(check_coordinates(0..grad.len(), grad.data(), STEP, floor, |i, delta| {
            let mut shifted = layer.clone();
            shifted.params_mut()[p].data_mut()[i] += delta;
            objective(&shifted, input)
        }));
    }
    Ok(report)
}

/// Checks every parameter gradient of a whole model under the weighted
/// cross-entropy loss of a train-mode pass. With `per_tensor = Some(k)` only
/// `k` randomly chosen coordinates of each parameter tensor are checked.
pub fn check_model(
    model: &Model<f64>,
    batch: &Tensor<f64>,
    labels: &[usize],
    weights: &ClassWeights,
    seed: u64,
    per_tensor: Option<usize>,
) -> Result<GradCheckReport, GradCheckError> {
    type Pass = (f64, Tensor<f64>, crate::nn::Caches<f64>, Model<f64>);
    let run = |model: &Model<f64>| -> Result<Pass, GradCheckError> {
        let mut model = model.clone();
        let pass = model.forward(batch, Mode::Train, &mut Rng::stream(seed, &[streams::DROPOUT]))?;
        let (loss, dlogits) = weighted_softmax_cross_entropy(&pass.logits, labels, weights)?;
        Ok((loss, dlogits, pass.caches.expect("train-mode pass keeps caches"), model))
    };
    let (loss, dlogits, caches, trained) = run(model)?;
    let floor = error_floor(loss);
    let pattern = fingerprint(caches.layers());
    let grads = trained.backward(&caches, &dlogits)?;

    let objective = |model: &Model<f64>| {
        let (loss, _, caches, _) = run(model).ok()?;
        (fingerprint(caches.layers()) == pattern).then_some(loss)
    };
    let mut pick = Rng::stream(seed, &[0x9d]);
    let mut report = GradCheckReport::default();
    for (p, grad) in grads.iter().enumerate() {
        let coords: Vec<usize> = match per_tensor {
            Some(k) if k < grad.len() => pick.permutation(grad.len())[..k].to_vec(),
            _ => (0..grad.len()).collect(),
        };
        report = report.merge(check_coordinates(coords, grad.data(), STEP, floor, |i, delta| {
            let mut shifted = model.clone();
            shifted.params_mut()[p].data_mut()[i] += delta;
            objective(&shifted)
        }));
    }
    Ok(report)
}

/// A randomized small instance of one layer kind.
#[derive(Debug, Clone)]
pub struct LayerCase {
    pub name: &'static str,
    pub layer: Layer<f64>,
    pub input: Tensor<f64>,
    pub mode: Mode,
}

fn randomize(layer: &mut Layer<f64>, rng: &mut Rng) -> Result<(), TensorError> {
    for p in layer.params_mut() {
        *p = Tensor::sample_normal(rng, p.shape(), 0.0, 0.5)?;
    }
    Ok(())
}

/// One instance of every layer kind, with shapes and hyperparameters drawn
/// from `seed`.
pub fn layer_cases(seed: u64) -> Result<Vec<LayerCase>, GradCheckError> {
    use crate::nn::{BatchNorm, Conv2d, Dense, Dropout, MaxPool, Padding};

    let mut rng = Rng::stream(seed, &[0x9e]);
    let mut dim = |lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    let (b, c, h, w) = (dim(2, 3), dim(1, 3), dim(4, 7), dim(4, 7));
    let out_c = dim(1, 3);
    let kernel = [1, 3][dim(0, 1)];
    let stride = dim(1, 2);
    let padding = [Padding::Same, Padding::Valid][dim(0, 1)];
    let features = dim(2, 6);
    let outputs = dim(1, 5);

    let mut rng = Rng::stream(seed, &[0x9f]);
    let image = Tensor::<f64>::sample_normal(&mut rng, &[b, c, h, w], 0.0, 1.0)?;
    let rows = Tensor::<f64>::sample_normal(&mut rng, &[b, features], 0.0, 1.0)?;

    let mut conv = Layer::Conv2d(Conv2d::new(c, out_c, kernel, stride, padding, &mut rng)?);
    randomize(&mut conv, &mut rng)?;
    let mut dense = Layer::Dense(Dense::new(features, outputs, &mut rng)?);
    randomize(&mut dense, &mut rng)?;
    let mut bn_image = Layer::BatchNorm(BatchNorm::new(c)?);
    randomize(&mut bn_image, &mut rng)?;
    let mut bn_rows = Layer::BatchNorm(BatchNorm::new(features)?);
    randomize(&mut bn_rows, &mut rng)?;
    let mut bn_infer = bn_image.clone();
    if let Layer::BatchNorm(bn) = &mut bn_infer {
        bn.running_mean = Tensor::sample_normal(&mut rng, &[c], 0.0, 0.5)?;
        bn.running_var = Tensor::sample_normal(&mut rng, &[c], 0.0, 1.0)?.map(|v| 0.5 + v * v)?;
    }
    let pool_window = [2, 3][rng.below(2)].min(h.min(w));
    let pool = Layer::MaxPool(MaxPool {
        window: pool_window,
        stride: 1 + rng.below(2),
    });

    let case = |name, layer, input: &Tensor<f64>, mode| LayerCase {
        name,
        layer,
        input: input.clone(),
        mode,
    };
    Ok(vec![
        case("conv2d", conv, &image, Mode::Train),
        case("dense", dense, &rows, Mode::Train),
        case("batchnorm-train-4d", bn_image, &image, Mode::Train),
        case("batchnorm-train-2d", bn_rows, &rows, Mode::Train),
        case("batchnorm-infer", bn_infer, &image, Mode::Infer),
        case("relu", Layer::Relu, &image, Mode::Train),
        case("maxpool", pool, &image, Mode::Train),
        case("dropout", Layer::Dropout(Dropout::new(0.3)?), &image, Mode::Train),
        case("flatten", Layer::Flatten, &image, Mode::Train),
        case("softmax", Layer::Softmax, &rows, Mode::Train),
    ])
}

/// Central differences of the weighted loss with respect to the logits.
pub fn check_loss(logits: &Tensor<f64>, labels: &[usize], weights: &ClassWeights) -> Result<GradCheckReport, GradCheckError> {
    let (loss, dlogits) = weighted_softmax_cross_entropy(logits, labels, weights)?;
    Ok(check_coordinates(0..logits.len(), dlogits.data(), STEP, error_floor(loss), |i, delta| {
        let mut z = logits.clone();
        z.data_mut()[i] += delta;
        weighted_softmax_cross_entropy(&z, labels, weights).ok().map(|(loss, _)| loss)
    }))
}
