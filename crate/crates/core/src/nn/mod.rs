//! Differentiable layers with explicit forward caches and hand-written
//! backward passes, plus the [`Model`] that chains them.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod init;
mod model;
mod pool;

pub use activation::{relu_backward, relu_forward, softmax, softmax_backward};
pub use batchnorm::BatchNorm;
pub use conv::{Conv2d, Padding};
pub use dense::Dense;
pub use dropout::Dropout;
pub use init::he_normal;
pub use model::{Caches, ForwardPass, Model, Preset};
pub use pool::MaxPool;

use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{layer}: expected input of rank {expected}, got shape {shape:?}")]
    InputRank {
        layer: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{layer}: expected {expected} input channels/features, got {actual}")]
    ChannelMismatch {
        layer: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{layer}: spatial input {input:?} is smaller than the window {window:?}")]
    SpatialUnderflow {
        layer: &'static str,
        input: [usize; 2],
        window: [usize; 2],
    },
    #[error("batchnorm: training mode needs at least 2 values per channel, got {0}")]
    SingleElementBatch(usize),
    #[error("batchnorm: running variance is negative")]
    NegativeRunningVar,
    #[error("invalid layer configuration: {0}")]
    InvalidConfig(String),
    #[error("{layer}: cache does not belong to this layer kind")]
    CacheMismatch { layer: &'static str },
    #[error("{layer}: upstream gradient shape {actual:?} does not match forward output {expected:?}")]
    UpstreamShape {
        layer: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("caches are stale: parameters changed since the forward pass")]
    StaleCache,
    #[error("no caches: backward needs a preceding train-mode forward pass")]
    MissingCaches,
    #[error("layer {index} ({kind}): {source}")]
    AtLayer {
        index: usize,
        kind: &'static str,
        #[source]
        source: Box<NnError>,
    },
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// What a layer's forward pass keeps for its backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T: Scalar = f32> {
    Conv {
        input: Tensor<T>,
    },
    BatchNorm {
        normalized: Tensor<T>,
        inv_std: Vec<T>,
        mode: Mode,
    },
    Relu {
        mask: Vec<bool>,
        shape: Vec<usize>,
    },
    MaxPool {
        input_shape: Vec<usize>,
        output_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Dropout {
        mask: Option<Vec<T>>,
        shape: Vec<usize>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Dense {
        input: Tensor<T>,
    },
    Softmax {
        probs: Tensor<T>,
    },
}

impl<T: Scalar> LayerCache<T> {
    /// Feeds the ReLU mask or pooling argmax, if any, into `state`. Equal
    /// patterns mean the pass stayed inside one piecewise-linear region.
    pub fn hash_pattern<H: std::hash::Hasher>(&self, state: &mut H) {
        use std::hash::Hash;
        match self {
            LayerCache::Relu { mask, .. } => mask.hash(state),
            LayerCache::MaxPool { argmax, .. } => argmax.hash(state),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Scalar = f32> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    MaxPool(MaxPool),
    Dropout(Dropout),
    Flatten,
    Dense(Dense<T>),
    Softmax,
}

pub(crate) fn check_upstream<T: Scalar>(
    layer: &'static str,
    expected: &[usize],
    upstream: &Tensor<T>,
) -> Result<()> {
    if upstream.shape() != expected {
        return Err(NnError::UpstreamShape {
            layer,
            expected: expected.to_vec(),
            actual: upstream.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::MaxPool(_) => "maxpool",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    /// Per-sample output shape for a per-sample input shape (batch axis excluded).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(conv) => conv.output_shape(input),
            Layer::BatchNorm(bn) => bn.output_shape(input),
            Layer::MaxPool(pool) => pool.output_shape(input),
            Layer::Dense(dense) => dense.output_shape(input),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Relu | Layer::Dropout(_) => Ok(input.to_vec()),
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(NnError::InputRank {
                        layer: "softmax",
                        expected: 1,
                        shape: input.to_vec(),
                    });
                }
                Ok(input.to_vec())
            }
        }
    }

    pub fn forward(
        &mut self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        match self {
            Layer::Conv2d(conv) => conv.forward(input),
            Layer::BatchNorm(bn) => bn.forward(input, mode),
            Layer::Relu => relu_forward(input),
            Layer::MaxPool(pool) => pool.forward(input),
            Layer::Dropout(dropout) => dropout.forward(input, mode, rng),
            Layer::Flatten => {
                let out = flatten(input)?;
                let cache = LayerCache::Flatten {
                    input_shape: input.shape().to_vec(),
                };
                Ok((out, cache))
            }
            Layer::Dense(dense) => dense.forward(input),
            Layer::Softmax => {
                let probs = softmax(input)?;
                Ok((probs.clone(), LayerCache::Softmax { probs }))
            }
        }
    }

    /// Inference-mode forward pass. Never mutates the layer.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(conv) => conv.apply(input),
            Layer::BatchNorm(bn) => bn.infer(input),
            Layer::Relu => Ok(input.map(|v| v.max(T::zero()))?),
            Layer::MaxPool(pool) => pool.forward(input).map(|(out, _)| out),
            Layer::Dropout(_) => Ok(input.clone()),
            Layer::Flatten => flatten(input),
            Layer::Dense(dense) => dense.forward(input).map(|(out, _)| out),
            Layer::Softmax => softmax(input),
        }
    }

    /// Returns the gradient with respect to the layer input and one gradient
    /// per trainable parameter, in [`Layer::params`] order.
    pub fn backward(
        &self,
        cache: &LayerCache<T>,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mismatch = || NnError::CacheMismatch { layer: self.kind() };
        match (self, cache) {
            (Layer::Conv2d(conv), LayerCache::Conv { input }) => {
                let (dx, dk, db) = conv.backward(input, upstream)?;
                Ok((dx, vec![dk, db]))
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm { normalized, inv_std, mode }) => {
                let (dx, dgamma, dbeta) = bn.backward(normalized, inv_std, *mode, upstream)?;
                Ok((dx, vec![dgamma, dbeta]))
            }
            (Layer::Relu, LayerCache::Relu { mask, shape }) => {
                Ok((relu_backward(mask, shape, upstream)?, vec![]))
            }
            (
                Layer::MaxPool(pool),
                LayerCache::MaxPool {
                    input_shape,
                    output_shape,
                    argmax,
                },
            ) => Ok((
                pool.backward(input_shape, output_shape, argmax, upstream)?,
                vec![],
            )),
            (Layer::Dropout(_), LayerCache::Dropout { mask, shape }) => {
                check_upstream("dropout", shape, upstream)?;
                let dx = match mask {
                    Some(mask) => {
                        let data = upstream
                            .data()
                            .iter()
                            .zip(mask)
                            .map(|(&g, &m)| g * m)
                            .collect();
                        Tensor::from_parts(shape.clone(), data)
                    }
                    None => upstream.clone(),
                };
                Ok((dx, vec![]))
            }
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                let expected = [input_shape[0], input_shape[1..].iter().product()];
                check_upstream("flatten", &expected, upstream)?;
                Ok((upstream.reshape(input_shape)?, vec![]))
            }
            (Layer::Dense(dense), LayerCache::Dense { input }) => {
                let (dx, dw, db) = dense.backward(input, upstream)?;
                Ok((dx, vec![dw, db]))
            }
            (Layer::Softmax, LayerCache::Softmax { probs }) => {
                Ok((softmax_backward(probs, upstream)?, vec![]))
            }
            _ => Err(mismatch()),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(conv) => vec![&conv.kernels, &conv.bias],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            Layer::Dense(dense) => vec![&dense.weights, &dense.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(conv) => vec![&mut conv.kernels, &mut conv.bias],
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            Layer::Dense(dense) => vec![&mut dense.weights, &mut dense.bias],
            _ => vec![],
        }
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Conv2d(conv) => Layer::Conv2d(conv.cast()),
            Layer::BatchNorm(bn) => Layer::BatchNorm(bn.cast()),
            Layer::Relu => Layer::Relu,
            Layer::MaxPool(pool) => Layer::MaxPool(*pool),
            Layer::Dropout(dropout) => Layer::Dropout(*dropout),
            Layer::Flatten => Layer::Flatten,
            Layer::Dense(dense) => Layer::Dense(dense.cast()),
            Layer::Softmax => Layer::Softmax,
        }
    }
}

fn flatten<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.rank() < 2 {
        return Err(NnError::InputRank {
            layer: "flatten",
            expected: 2,
            shape: input.shape().to_vec(),
        });
    }
    let batch = input.shape()[0];
    Ok(input.reshape(&[batch, input.len() / batch])?)
}
