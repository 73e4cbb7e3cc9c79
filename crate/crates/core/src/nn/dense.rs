use super::{check_upstream, he_normal, LayerCache, NnError, Result};
use crate::rng::Rng;
use crate::tensor::{ensure_finite, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar = f32> {
    /// `[in, out]`
    pub weights: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn from_parts(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(NnError::InvalidConfig(format!(
                "dense weights {:?} and bias {:?} are inconsistent",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Result<Self> {
        let weights = he_normal(rng, &[inputs, outputs], inputs)?;
        Self::from_parts(weights, Tensor::zeros(&[outputs])?)
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn output_shape(&self, sample_shape: &[usize]) -> Result<Vec<usize>> {
        match sample_shape {
            [n] if *n == self.inputs() => Ok(vec![self.outputs()]),
            [n] => Err(NnError::ChannelMismatch {
                layer: "dense",
                expected: self.inputs(),
                actual: *n,
            }),
            other => Err(NnError::InputRank {
                layer: "dense",
                expected: 2,
                shape: other.to_vec(),
            }),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>)> {
        if input.rank() != 2 {
            return Err(NnError::InputRank {
                layer: "dense",
                expected: 2,
                shape: input.shape().to_vec(),
            });
        }
        self.output_shape(&input.shape()[1..])?;
        let batch = input.shape()[0];
        let outputs = self.outputs();
        let mut out: Vec<T> = self.bias.data().repeat(batch);
        T::gemm(
            batch,
            self.inputs(),
            outputs,
            input.data(),
            (self.inputs() as isize, 1),
            self.weights.data(),
            (outputs as isize, 1),
            T::one(),
            &mut out,
        );
        ensure_finite(&out, "dense")?;
        Ok((
            Tensor::from_parts(vec![batch, outputs], out),
            LayerCache::Dense {
                input: input.clone(),
            },
        ))
    }

    /// Returns `(upstream·Wᵀ, inputᵀ·upstream, column sums of upstream)`.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let batch = input.shape()[0];
        check_upstream("dense", &[batch, self.outputs()], upstream)?;
        let dx = upstream.matmul(&self.weights.transpose2d()?)?;
        let dw = input.transpose2d()?.matmul(upstream)?;
        let db = upstream.reduce(crate::tensor::Reduction::Sum, Some(0))?;
        Ok((dx, dw, db))
    }

    pub fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }
}
