//! First-order optimizers: SGD, SGD with momentum, Adam, NAdam and Adamax.
//!
//! With `t` the step count after incrementing, `g` the gradient and `lr` the
//! learning rate:
//!
//! | kind     | update |
//! |----------|--------|
//! | sgd      | `w ← w − lr·g` |
//! | momentum | `vel ← μ·vel + g`, `w ← w − lr·vel` |
//! | adam     | `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`, `w ← w − lr·m̂/(√v̂ + ε)` |
//! | nadam    | adam moments, `w ← w − lr·(β1·m/(1−β1^(t+1)) + (1−β1)·g/(1−β1^t))/(√v̂ + ε)` |
//! | adamax   | adam `m`, `u ← max(β2·u, |g|)`, `w ← w − lr/(1−β1^t)·m/(u + ε)` |
//!
//! where `m̂ = m/(1−β1^t)` and `v̂ = v/(1−β2^t)`. NAdam uses no momentum-decay
//! schedule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("{params} parameter tensors but {grads} gradients")]
    CountMismatch { params: usize, grads: usize },
    #[error("gradient {index} has shape {grad:?}, parameter has {param:?}")]
    ShapeMismatch {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("gradient {index} contains a non-finite value")]
    NonFiniteGradient { index: usize },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("update produced a non-finite parameter in tensor {index}")]
    NonFiniteParameter { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
    Nadam,
    Adamax,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Adam,
        OptimizerKind::Nadam,
        OptimizerKind::Adamax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Adamax => "adamax",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown optimizer '{s}' (expected sgd, momentum, adam, nadam or adamax)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Velocity decay for [`OptimizerKind::Momentum`].
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Nadam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn with_kind(kind: OptimizerKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(OptimError::InvalidConfig(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("momentum", self.momentum)
    }
}

/// Per-parameter accumulators. `first` holds the first moment (or the
/// velocity for momentum SGD); `second` holds the second moment for
/// Adam/NAdam or the infinity norm for Adamax.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Scalar = f32> {
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for OptimizerState<T> {
    fn default() -> Self {
        Self {
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<T: Scalar = f32> {
    config: OptimizerConfig,
    state: OptimizerState<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self {
            config,
            state: OptimizerState::default(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState<T> {
        &self.state
    }

    fn check(&self, params: &[&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), OptimError> {
        if params.len() != grads.len() {
            return Err(OptimError::CountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(OptimError::ShapeMismatch {
                    index,
                    param: p.shape().to_vec(),
                    grad: g.shape().to_vec(),
                });
            }
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(OptimError::NonFiniteGradient { index });
            }
        }
        if !self.state.first.is_empty() {
            for (index, (p, m)) in params.iter().zip(&self.state.first).enumerate() {
                if p.shape() != m.shape() {
                    return Err(OptimError::ShapeMismatch {
                        index,
                        param: p.shape().to_vec(),
                        grad: m.shape().to_vec(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Applies one update to every parameter. Nothing is modified when the
    /// inputs are misaligned or a gradient is not finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), OptimError> {
        self.check(params, grads)?;
        if self.state.first.is_empty() {
            self.state.first = grads.iter().map(Tensor::zeros_like).collect();
            self.state.second = grads.iter().map(Tensor::zeros_like).collect();
        }
        self.state.step += 1;
        let t = self.state.step as f64;

        let c = &self.config;
        let lr = T::from_f64_lossy(c.learning_rate);
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let eps = T::from_f64_lossy(c.epsilon);
        let mu = T::from_f64_lossy(c.momentum);
        let one = T::one();
        let bias1 = T::from_f64_lossy(1.0 - c.beta1.powf(t));
        let bias1_next = T::from_f64_lossy(1.0 - c.beta1.powf(t + 1.0));
        let bias2 = T::from_f64_lossy(1.0 - c.beta2.powf(t));

        for (index, ((param, grad), (first, second))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.state.first.iter_mut().zip(self.state.second.iter_mut()))
            .enumerate()
        {
            let w = param.data_mut();
            let m = first.data_mut();
            let v = second.data_mut();
            for (i, &g) in grad.data().iter().enumerate() {
                match c.kind {
                    OptimizerKind::Sgd => w[i] -= lr * g,
                    OptimizerKind::Momentum => {
                        m[i] = mu * m[i] + g;
                        w[i] -= lr * m[i];
                    }
                    OptimizerKind::Adam => {
                        m[i] = b1 * m[i] + (one - b1) * g;
                        v[i] = b2 * v[i] + (one - b2) * g * g;
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    OptimizerKind::Nadam => {
                        m[i] = b1 * m[i] + (one - b1) * g;
                        v[i] = b2 * v[i] + (one - b2) * g * g;
                        let v_hat = v[i] / bias2;
                        let lookahead = b1 * m[i] / bias1_next + (one - b1) * g / bias1;
                        w[i] -= lr * lookahead / (v_hat.sqrt() + eps);
                    }
                    OptimizerKind::Adamax => {
                        m[i] = b1 * m[i] + (one - b1) * g;
                        v[i] = (b2 * v[i]).max(g.abs());
                        w[i] -= lr / bias1 * m[i] / (v[i] + eps);
                    }
                }
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(OptimError::NonFiniteParameter { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(&[1], vec![v]).unwrap()
    }

    fn one_step(kind: OptimizerKind, w: f64, g: f64, lr: f64) -> f64 {
        let mut opt = Optimizer::<f64>::new(OptimizerConfig {
            learning_rate: lr,
            ..OptimizerConfig::with_kind(kind)
        })
        .unwrap();
        let mut p = scalar(w);
        opt.step(&mut [&mut p], &[scalar(g)]).unwrap();
        p.data()[0]
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for kind in OptimizerKind::ALL {
            let mut opt = Optimizer::<f32>::new(OptimizerConfig::with_kind(kind)).unwrap();
            let mut p = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
            let before = p.clone();
            for _ in 0..3 {
                opt.step(&mut [&mut p], &[Tensor::zeros(&[3]).unwrap()]).unwrap();
            }
            assert_eq!(p, before, "{kind}");
            assert_eq!(opt.state().step, 3);
        }
    }

    #[test]
    fn sgd_step() {
        assert!((one_step(OptimizerKind::Sgd, 1.0, 0.5, 0.1) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        let dw = one_step(OptimizerKind::Adam, 0.0, 1.0, 0.001);
        assert!((dw - -0.000999999990).abs() < 1e-12, "{dw}");
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut opt = Optimizer::<f64>::new(OptimizerConfig {
            learning_rate: 0.1,
            ..OptimizerConfig::with_kind(OptimizerKind::Momentum)
        })
        .unwrap();
        let mut p = scalar(0.0);
        opt.step(&mut [&mut p], &[scalar(1.0)]).unwrap();
        opt.step(&mut [&mut p], &[scalar(1.0)]).unwrap();
        // velocities 1 and 1.9
        assert!((p.data()[0] - -0.29).abs() < 1e-12);
    }

    #[test]
    fn misaligned_inputs_leave_parameters_untouched() {
        let mut opt = Optimizer::<f32>::new(OptimizerConfig::default()).unwrap();
        let mut p = Tensor::full(&[2], 1.0).unwrap();
        assert!(matches!(
            opt.step(&mut [&mut p], &[Tensor::zeros(&[3]).unwrap()]),
            Err(OptimError::ShapeMismatch { .. })
        ));
        assert!(matches!(opt.step(&mut [&mut p], &[]), Err(OptimError::CountMismatch { .. })));
        assert_eq!(opt.state().step, 0);
        assert_eq!(p.data(), &[1.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(Optimizer::<f32>::new(OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(Optimizer::<f32>::new(OptimizerConfig {
            beta1: 1.0,
            ..Default::default()
        })
        .is_err());
        assert_eq!("adamax".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adamax);
        assert!("adagrad".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn all_kinds_minimize_a_quadratic() {
        for kind in OptimizerKind::ALL {
            let mut opt = Optimizer::<f64>::new(OptimizerConfig {
                learning_rate: 0.01,
                ..OptimizerConfig::with_kind(kind)
            })
            .unwrap();
            let mut w = scalar(5.0);
            for _ in 0..10_000 {
                let g = w.clone();
                opt.step(&mut [&mut w], &[g]).unwrap();
            }
            assert!(w.data()[0].abs() < 1e-2, "{kind}: {}", w.data()[0]);
        }
    }

    #[test]
    fn adaptive_steps_are_bounded_for_constant_gradient() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Nadam, OptimizerKind::Adamax] {
            let cfg = OptimizerConfig::with_kind(kind);
            let bound = cfg.learning_rate * (1.0 + cfg.beta1) / (1.0 - cfg.beta1);
            let mut opt = Optimizer::<f64>::new(cfg).unwrap();
            let mut w = scalar(0.0);
            for _ in 0..200 {
                let before = w.data()[0];
                opt.step(&mut [&mut w], &[scalar(0.37)]).unwrap();
                assert!((w.data()[0] - before).abs() <= bound, "{kind}");
            }
        }
    }
}
