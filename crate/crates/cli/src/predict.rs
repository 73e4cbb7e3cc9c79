//! Single-image inference shared by `fer predict` and the HTTP service, so
//! both produce bit-identical probabilities for the same pixels.

use fer_core::data::{Sample, CLASS_NAMES};
use fer_core::nn::{Model, NnError};
use fer_core::{IMAGE_SIDE, NUM_CLASSES};

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("model expects input shape {0:?}, not a [1, 48, 48] grayscale image")]
    InputShape(Vec<usize>),
    #[error("model produced {0} outputs, expected {NUM_CLASSES}")]
    OutputWidth(usize),
    #[error(transparent)]
    Model(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probabilities: [f32; NUM_CLASSES],
    pub label: usize,
}

impl Prediction {
    pub fn label_name(&self) -> &'static str {
        CLASS_NAMES[self.label]
    }
}

/// Rejects models that cannot take a single 48×48 grayscale image.
pub fn check_model(model: &Model) -> Result<(), PredictError> {
    if model.input_shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
        return Err(PredictError::InputShape(model.input_shape().to_vec()));
    }
    Ok(())
}

/// Scales `pixels` (row-major, 0..=255) to [0, 1] and runs an infer-mode
/// forward pass.
pub fn predict_pixels(model: &Model, pixels: &[u8]) -> Result<Prediction, PredictError> {
    check_model(model)?;
    let image = Sample::from_bytes(pixels, 0).pixels;
    let batch = image
        .reshape(&[1, 1, IMAGE_SIDE, IMAGE_SIDE])
        .map_err(NnError::from)?;
    let probs = model.predict(&batch)?;
    let probabilities: [f32; NUM_CLASSES] = probs
        .data()
        .try_into()
        .map_err(|_| PredictError::OutputWidth(probs.data().len()))?;
    // First maximum wins, matching argmax elsewhere.
    let label = probabilities
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > probabilities[best] { i } else { best });
    Ok(Prediction { probabilities, label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fer_core::nn::Preset;
    use fer_core::{Rng, IMAGE_PIXELS};

    #[test]
    fn probabilities_sum_to_one_and_label_is_argmax() {
        let model = Model::preset(Preset::FerTiny, &mut Rng::new(1)).unwrap();
        let pixels: Vec<u8> = (0..IMAGE_PIXELS).map(|i| (i * 7 % 256) as u8).collect();
        let p = predict_pixels(&model, &pixels).unwrap();
        let sum: f64 = p.probabilities.iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(p.probabilities.iter().all(|&v| v <= p.probabilities[p.label]));
        assert_eq!(predict_pixels(&model, &pixels).unwrap(), p);
    }
}
