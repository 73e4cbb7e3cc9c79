use super::{NnError, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// He-normal initialization: `Normal(0, 2 / fan_in)`.
pub fn he_normal<T: Scalar>(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(NnError::InvalidConfig("fan_in must be at least 1".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    Ok(Tensor::sample_normal(rng, shape, 0.0, std)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_of(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn fan_in_two_gives_unit_std() {
        let w: Tensor<f64> = he_normal(&mut Rng::new(17), &[100_000], 2).unwrap();
        let std = std_of(w.data());
        assert!((std - 1.0).abs() <= 0.02, "std {std}");
    }

    #[test]
    fn huge_fan_in_gives_tiny_weights() {
        // std = 1e-3, so |w| < 0.02 is a 20-sigma bound.
        let w: Tensor<f64> = he_normal(&mut Rng::new(1), &[10_000], 2_000_000).unwrap();
        assert!(w.data().iter().all(|v| v.abs() < 0.02));
    }

    #[test]
    fn deterministic_and_rejects_zero_fan_in() {
        let a: Tensor<f32> = he_normal(&mut Rng::new(5), &[3, 3], 9).unwrap();
        let b: Tensor<f32> = he_normal(&mut Rng::new(5), &[3, 3], 9).unwrap();
        assert_eq!(a, b);
        assert!(he_normal::<f32>(&mut Rng::new(5), &[3], 0).is_err());
    }
}
