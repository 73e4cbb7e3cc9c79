use serde::{Deserialize, Serialize};

use super::{check_upstream, LayerCache, NnError, Result};
use crate::tensor::{Scalar, Tensor};

/// Max pooling over square windows. Trailing rows/columns that do not fill a
/// whole window are dropped; ties go to the first position in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool {
    pub window: usize,
    pub stride: usize,
}

impl Default for MaxPool {
    fn default() -> Self {
        Self {
            window: 2,
            stride: 2,
        }
    }
}

impl MaxPool {
    pub fn output_shape(&self, sample_shape: &[usize]) -> Result<Vec<usize>> {
        let [c, h, w] = *sample_shape else {
            return Err(NnError::InputRank {
                layer: "maxpool",
                expected: 4,
                shape: sample_shape.to_vec(),
            });
        };
        if self.window == 0 || self.stride == 0 {
            return Err(NnError::InvalidConfig("pool window and stride must be ≥ 1".into()));
        }
        if h < self.window || w < self.window {
            return Err(NnError::SpatialUnderflow {
                layer: "maxpool",
                input: [h, w],
                window: [self.window, self.window],
            });
        }
        Ok(vec![
            c,
            (h - self.window) / self.stride + 1,
            (w - self.window) / self.stride + 1,
        ])
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>)> {
        if input.rank() != 4 {
            return Err(NnError::InputRank {
                layer: "maxpool",
                expected: 4,
                shape: input.shape().to_vec(),
            });
        }
        let (batch, h, w) = (input.shape()[0], input.shape()[2], input.shape()[3]);
        let out_sample = self.output_shape(&input.shape()[1..])?;
        let (c, oh, ow) = (out_sample[0], out_sample[1], out_sample[2]);
        let data = input.data();
        let mut out = Vec::with_capacity(batch * c * oh * ow);
        let mut argmax = Vec::with_capacity(out.capacity());
        for plane in 0..batch * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * self.stride * w + ox * self.stride;
                    for dy in 0..self.window {
                        for dx in 0..self.window {
                            let idx = base + (oy * self.stride + dy) * w + ox * self.stride + dx;
                            if data[idx] > data[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let output_shape = vec![batch, c, oh, ow];
        let cache = LayerCache::MaxPool {
            input_shape: input.shape().to_vec(),
            output_shape: output_shape.clone(),
            argmax,
        };
        Ok((Tensor::from_parts(output_shape, out), cache))
    }

    pub fn backward<T: Scalar>(
        &self,
        input_shape: &[usize],
        output_shape: &[usize],
        argmax: &[usize],
        upstream: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        check_upstream("maxpool", output_shape, upstream)?;
        let mut dx = vec![T::zero(); input_shape.iter().product()];
        for (&src, &g) in argmax.iter().zip(upstream.data()) {
            dx[src] += g;
        }
        Ok(Tensor::from_parts(input_shape.to_vec(), dx))
    }
}
