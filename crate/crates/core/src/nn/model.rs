//! Layer stacks ending in a softmax over the seven expression classes.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use super::{
    softmax, BatchNorm, Conv2d, Dense, Dropout, Layer, LayerCache, MaxPool, Mode, NnError,
    Padding, Result,
};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};
use crate::{IMAGE_SIDE, NUM_CLASSES};

/// Named architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Four double-conv blocks (64/128/256/512 channels), dense 256 head.
    FerRefV1,
    /// Two single-conv blocks (8/16 channels), dense 32 head. Used by tests
    /// and desk-scale runs.
    FerTiny,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::FerRefV1 => "fer-ref-v1",
            Preset::FerTiny => "fer-tiny",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fer-ref-v1" => Ok(Preset::FerRefV1),
            "fer-tiny" => Ok(Preset::FerTiny),
            other => Err(format!(
                "unknown preset '{other}' (expected fer-ref-v1 or fer-tiny)"
            )),
        }
    }
}

/// Caches from one train-mode forward pass.
#[derive(Debug, Clone)]
pub struct Caches<T: Scalar = f32> {
    generation: u64,
    layers: Vec<LayerCache<T>>,
}

impl<T: Scalar> Caches<T> {
    pub fn layers(&self) -> &[LayerCache<T>] {
        &self.layers
    }

    /// Fingerprint of every ReLU mask and pooling argmax. Two forward passes
    /// with the same fingerprint went through the same linear region.
    pub fn activation_pattern(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        for cache in &self.layers {
            cache.hash_pattern(&mut hasher);
        }
        hasher.finish()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T: Scalar = f32> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
    /// Present only for train-mode passes.
    pub caches: Option<Caches<T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    generation: u64,
}

impl<T: Scalar> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

fn at_layer(index: usize, kind: &'static str) -> impl FnOnce(NnError) -> NnError {
    move |source| NnError::AtLayer {
        index,
        kind,
        source: Box::new(source),
    }
}

impl<T: Scalar> Model<T> {
    /// Validates that the stack composes from `input_shape` (per sample,
    /// `[channels, h, w]`) down to a single terminal softmax over seven classes.
    pub fn new(input_shape: &[usize], layers: Vec<Layer<T>>) -> Result<Self> {
        match layers.last() {
            Some(Layer::Softmax) => {}
            _ => {
                return Err(NnError::InvalidConfig(
                    "the last layer must be a softmax".into(),
                ))
            }
        }
        if layers[..layers.len() - 1]
            .iter()
            .any(|l| matches!(l, Layer::Softmax))
        {
            return Err(NnError::InvalidConfig(
                "softmax may only appear as the last layer".into(),
            ));
        }
        let mut shape = input_shape.to_vec();
        for (index, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(at_layer(index, layer.kind()))?;
        }
        if shape != [NUM_CLASSES] {
            return Err(NnError::InvalidConfig(format!(
                "model output shape is {shape:?}, expected [{NUM_CLASSES}]"
            )));
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            generation: 0,
        })
    }

    pub fn preset(preset: Preset, rng: &mut Rng) -> Result<Self> {
        let (blocks, convs_per_block, hidden): (&[usize], usize, usize) = match preset {
            Preset::FerRefV1 => (&[64, 128, 256, 512], 2, 256),
            Preset::FerTiny => (&[8, 16], 1, 32),
        };
        let mut layers = Vec::new();
        let mut channels = 1;
        let mut side = IMAGE_SIDE;
        for &width in blocks {
            for _ in 0..convs_per_block {
                layers.push(Layer::Conv2d(Conv2d::new(
                    channels,
                    width,
                    3,
                    1,
                    Padding::Same,
                    rng,
                )?));
                layers.push(Layer::BatchNorm(BatchNorm::new(width)?));
                layers.push(Layer::Relu);
                channels = width;
            }
            layers.push(Layer::MaxPool(MaxPool::default()));
            layers.push(Layer::Dropout(Dropout::new(0.25)?));
            side /= 2;
        }
        let flat = channels * side * side;
        layers.push(Layer::Flatten);
        layers.push(Layer::Dense(Dense::new(flat, hidden, rng)?));
        layers.push(Layer::BatchNorm(BatchNorm::new(hidden)?));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout(Dropout::new(0.5)?));
        layers.push(Layer::Dense(Dense::new(hidden, NUM_CLASSES, rng)?));
        layers.push(Layer::Softmax);
        Self::new(&[1, IMAGE_SIDE, IMAGE_SIDE], layers)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to the layer list; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.generation += 1;
        &mut self.layers
    }

    /// True when some batch-normalization layer sees one value per channel
    /// per sample, which makes a training batch of one sample invalid.
    pub fn has_per_feature_batchnorm(&self) -> bool {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            if matches!(layer, Layer::BatchNorm(_)) && shape.len() == 1 {
                return true;
            }
            shape = layer.output_shape(&shape).expect("validated at construction");
        }
        false
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Trainable parameters in a fixed order; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.generation += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.rank() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            return Err(NnError::InvalidConfig(format!(
                "model input must have shape [batch, {:?}], got {:?}",
                self.input_shape,
                batch.shape()
            )));
        }
        Ok(())
    }

    fn body(&self) -> &[Layer<T>] {
        &self.layers[..self.layers.len() - 1]
    }

    /// Logits in inference mode. Pure in the parameters and the input.
    pub fn infer_logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        for (index, layer) in self.body().iter().enumerate() {
            x = layer.infer(&x).map_err(at_layer(index, layer.kind()))?;
        }
        Ok(x)
    }

    /// Class probabilities in inference mode.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.infer_logits(batch)?)
    }

    pub fn forward(&mut self, batch: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<ForwardPass<T>> {
        if mode == Mode::Infer {
            let logits = self.infer_logits(batch)?;
            let probs = softmax(&logits)?;
            return Ok(ForwardPass {
                logits,
                probs,
                caches: None,
            });
        }
        self.check_batch(batch)?;
        self.generation += 1;
        let body_len = self.layers.len() - 1;
        let mut caches = Vec::with_capacity(body_len);
        let mut x = batch.clone();
        for (index, layer) in self.layers[..body_len].iter_mut().enumerate() {
            let kind = layer.kind();
            let (out, cache) = layer.forward(&x, mode, rng).map_err(at_layer(index, kind))?;
            caches.push(cache);
            x = out;
        }
        let probs = softmax(&x)?;
        Ok(ForwardPass {
            logits: x,
            probs,
            caches: Some(Caches {
                generation: self.generation,
                layers: caches,
            }),
        })
    }

    /// Gradients of the loss with respect to every trainable parameter, in
    /// [`Model::params`] order, given the gradient with respect to the logits.
    pub fn backward(&self, caches: &Caches<T>, dlogits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if caches.generation != self.generation {
            return Err(NnError::StaleCache);
        }
        let body = self.body();
        if caches.layers.len() != body.len() {
            return Err(NnError::MissingCaches);
        }
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(body.len());
        let mut upstream = dlogits.clone();
        for (index, (layer, cache)) in body.iter().zip(&caches.layers).enumerate().rev() {
            let (dx, grads) = layer
                .backward(cache, &upstream)
                .map_err(at_layer(index, layer.kind()))?;
            per_layer.push(grads);
            upstream = dx;
        }
        Ok(per_layer.into_iter().rev().flatten().collect())
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
            generation: 0,
        }
    }
}
