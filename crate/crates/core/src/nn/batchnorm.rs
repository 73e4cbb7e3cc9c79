//! Batch normalization over the batch and spatial axes, one statistic pair
//! per channel. Accepts `[batch, ch]` and `[batch, ch, h, w]` inputs.

use super::{check_upstream, LayerCache, Mode, NnError, Result};
use crate::tensor::{ensure_finite, Scalar, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T: Scalar = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// `(batch, channels, positions per channel per sample)`
fn layout<T: Scalar>(input: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match input.shape() {
        [b, c] => Ok((*b, *c, 1)),
        [b, c, h, w] => Ok((*b, *c, h * w)),
        other => Err(NnError::InputRank {
            layer: "batchnorm",
            expected: 4,
            shape: other.to_vec(),
        }),
    }
}

impl<T: Scalar> BatchNorm<T> {
    /// gamma 1, beta 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Result<Self> {
        Self::with_hyperparameters(channels, DEFAULT_MOMENTUM, DEFAULT_EPSILON)
    }

    pub fn with_hyperparameters(channels: usize, momentum: f64, epsilon: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(NnError::InvalidConfig(format!(
                "batchnorm momentum must lie in (0, 1), got {momentum}"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "batchnorm epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            momentum,
            epsilon,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn output_shape(&self, sample_shape: &[usize]) -> Result<Vec<usize>> {
        match sample_shape {
            [c] | [c, _, _] if *c == self.channels() => Ok(sample_shape.to_vec()),
            [c] | [c, _, _] => Err(NnError::ChannelMismatch {
                layer: "batchnorm",
                expected: self.channels(),
                actual: *c,
            }),
            other => Err(NnError::InputRank {
                layer: "batchnorm",
                expected: 4,
                shape: other.to_vec(),
            }),
        }
    }

    fn check_channels(&self, channels: usize) -> Result<()> {
        if channels != self.channels() {
            return Err(NnError::ChannelMismatch {
                layer: "batchnorm",
                expected: self.channels(),
                actual: channels,
            });
        }
        Ok(())
    }

    fn normalize_and_scale(
        &self,
        input: &Tensor<T>,
        mean: &[T],
        inv_std: &[T],
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let (batch, channels, positions) = layout(input)?;
        let mut normalized = Vec::with_capacity(input.len());
        let mut out = Vec::with_capacity(input.len());
        for b in 0..batch {
            for c in 0..channels {
                let (g, bt) = (self.gamma.data()[c], self.beta.data()[c]);
                let start = (b * channels + c) * positions;
                for &x in &input.data()[start..start + positions] {
                    let xh = (x - mean[c]) * inv_std[c];
                    normalized.push(xh);
                    out.push(g * xh + bt);
                }
            }
        }
        ensure_finite(&out, "batchnorm")?;
        let shape = input.shape().to_vec();
        Ok((
            Tensor::from_parts(shape.clone(), normalized),
            Tensor::from_parts(shape, out),
        ))
    }

    fn running_inv_std(&self) -> Result<Vec<T>> {
        let eps = T::from_f64_lossy(self.epsilon);
        self.running_var
            .data()
            .iter()
            .map(|&v| {
                if v < T::zero() {
                    Err(NnError::NegativeRunningVar)
                } else {
                    Ok(T::one() / (v + eps).sqrt())
                }
            })
            .collect()
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, channels, _) = layout(input)?;
        self.check_channels(channels)?;
        let inv_std = self.running_inv_std()?;
        Ok(self
            .normalize_and_scale(input, self.running_mean.data(), &inv_std)?
            .1)
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, LayerCache<T>)> {
        let (batch, channels, positions) = layout(input)?;
        self.check_channels(channels)?;
        let (mean, inv_std) = match mode {
            Mode::Infer => (self.running_mean.data().to_vec(), self.running_inv_std()?),
            Mode::Train => {
                let count = batch * positions;
                if count < 2 {
                    return Err(NnError::SingleElementBatch(count));
                }
                let n = T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); channels];
                let mut var = vec![T::zero(); channels];
                for b in 0..batch {
                    for c in 0..channels {
                        let start = (b * channels + c) * positions;
                        mean[c] += input.data()[start..start + positions].iter().copied().sum();
                    }
                }
                mean.iter_mut().for_each(|m| *m = *m / n);
                for b in 0..batch {
                    for c in 0..channels {
                        let start = (b * channels + c) * positions;
                        var[c] += input.data()[start..start + positions]
                            .iter()
                            .map(|&x| (x - mean[c]) * (x - mean[c]))
                            .sum();
                    }
                }
                var.iter_mut().for_each(|v| *v = *v / n);

                let momentum = T::from_f64_lossy(self.momentum);
                let keep = T::one() - momentum;
                for c in 0..channels {
                    let rm = &mut self.running_mean.data_mut()[c];
                    *rm = momentum * *rm + keep * mean[c];
                    let rv = &mut self.running_var.data_mut()[c];
                    *rv = momentum * *rv + keep * var[c];
                }
                let eps = T::from_f64_lossy(self.epsilon);
                let inv_std = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                (mean, inv_std)
            }
        };
        let (normalized, out) = self.normalize_and_scale(input, &mean, &inv_std)?;
        Ok((
            out,
            LayerCache::BatchNorm {
                normalized,
                inv_std,
                mode,
            },
        ))
    }

    /// Returns `(d_input, d_gamma, d_beta)`. In train mode the input gradient
    /// includes the paths through the batch mean and variance.
    pub fn backward(
        &self,
        normalized: &Tensor<T>,
        inv_std: &[T],
        mode: Mode,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        check_upstream("batchnorm", normalized.shape(), upstream)?;
        let (batch, channels, positions) = layout(normalized)?;
        self.check_channels(channels)?;
        let mut dgamma = vec![T::zero(); channels];
        let mut dbeta = vec![T::zero(); channels];
        for b in 0..batch {
            for c in 0..channels {
                let start = (b * channels + c) * positions;
                let span = start..start + positions;
                for (&g, &xh) in upstream.data()[span.clone()].iter().zip(&normalized.data()[span]) {
                    dgamma[c] += g * xh;
                    dbeta[c] += g;
                }
            }
        }
        let n = T::from_usize(batch * positions).unwrap();
        let mut dx = Vec::with_capacity(normalized.len());
        for b in 0..batch {
            for c in 0..channels {
                let start = (b * channels + c) * positions;
                let scale = self.gamma.data()[c] * inv_std[c];
                let span = start..start + positions;
                let pairs = upstream.data()[span.clone()].iter().zip(&normalized.data()[span]);
                match mode {
                    Mode::Train => dx.extend(
                        pairs.map(|(&g, &xh)| scale / n * (n * g - dbeta[c] - xh * dgamma[c])),
                    ),
                    Mode::Infer => dx.extend(pairs.map(|(&g, _)| scale * g)),
                }
            }
        }
        ensure_finite(&dx, "batchnorm backward")?;
        Ok((
            Tensor::from_parts(normalized.shape().to_vec(), dx),
            Tensor::from_parts(vec![channels], dgamma),
            Tensor::from_parts(vec![channels], dbeta),
        ))
    }

    pub fn cast<U: Scalar>(&self) -> BatchNorm<U> {
        BatchNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            momentum: self.momentum,
            epsilon: self.epsilon,
        }
    }
}
