use serde::{Deserialize, Serialize};

use super::{LayerCache, Mode, NnError, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during training,
/// so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidConfig(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn forward<T: Scalar>(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        let shape = input.shape().to_vec();
        if mode == Mode::Infer {
            return Ok((input.clone(), LayerCache::Dropout { mask: None, shape }));
        }
        let scale = T::from_f64_lossy(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..input.len())
            .map(|_| {
                if rng.uniform() < self.rate {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        let out = input
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        Ok((
            Tensor::from_parts(shape.clone(), out),
            LayerCache::Dropout {
                mask: Some(mask),
                shape,
            },
        ))
    }
}
