use super::{check_upstream, LayerCache, NnError, Result};
use crate::tensor::{ensure_finite, Scalar, Tensor};

/// `max(0, x)`. The cached mask is `x > 0`, so the subgradient at 0 is 0.
pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>)> {
    let mask: Vec<bool> = input.data().iter().map(|&v| v > T::zero()).collect();
    let out = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&v, &keep)| if keep { v } else { T::zero() })
        .collect();
    let cache = LayerCache::Relu {
        mask,
        shape: input.shape().to_vec(),
    };
    Ok((Tensor::from_parts(input.shape().to_vec(), out), cache))
}

pub fn relu_backward<T: Scalar>(
    mask: &[bool],
    shape: &[usize],
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_upstream("relu", shape, upstream)?;
    let dx = upstream
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &keep)| if keep { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_parts(shape.to_vec(), dx))
}

fn check_rows<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(NnError::InputRank {
            layer: "softmax",
            expected: 2,
            shape: t.shape().to_vec(),
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, classes) = check_rows(logits)?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&z| (z - max).exp()));
        let total: T = out[start..].iter().copied().sum();
        for p in &mut out[start..] {
            *p = *p / total;
        }
    }
    ensure_finite(&out, "softmax")?;
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

/// Vector-Jacobian product of softmax: `p ⊙ (g − Σ g·p)` per row.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, classes) = check_rows(probs)?;
    check_upstream("softmax", probs.shape(), upstream)?;
    let mut dx = Vec::with_capacity(probs.len());
    for (p, g) in probs
        .data()
        .chunks_exact(classes)
        .zip(upstream.data().chunks_exact(classes))
    {
        let dot: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
        dx.extend(p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)));
    }
    Ok(Tensor::from_parts(probs.shape().to_vec(), dx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_cases() {
        let x = Tensor::<f32>::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (y, cache) = relu_forward(&x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let LayerCache::Relu { mask, shape } = cache else { unreachable!() };
        assert_eq!(mask, vec![false, false, true]);
        let ones = Tensor::full(&[3], 1.0).unwrap();
        assert_eq!(relu_backward(&mask, &shape, &ones).unwrap().data(), &[0.0, 0.0, 1.0]);

        let pos = Tensor::<f32>::new(&[3], vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(relu_forward(&pos).unwrap().0, pos);

        let x = Tensor::<f32>::new(&[2], vec![-1.0, 2.0]).unwrap();
        let (_, cache) = relu_forward(&x).unwrap();
        let LayerCache::Relu { mask, shape } = cache else { unreachable!() };
        let up = Tensor::full(&[2], 5.0).unwrap();
        assert_eq!(relu_backward(&mask, &shape, &up).unwrap().data(), &[0.0, 5.0]);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&Tensor::<f64>::full(&[2, 7], 0.3).unwrap()).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-12));

        let p = softmax(&Tensor::<f64>::new(&[1, 2], vec![0.0, 2f64.ln()]).unwrap()).unwrap();
        assert!((p.data()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.data()[1] - 2.0 / 3.0).abs() < 1e-12);

        let z = Tensor::<f32>::new(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let a = softmax(&z).unwrap();
        let b = softmax(&z.add_scalar(100.0).unwrap()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-6);
        }

        let huge = Tensor::<f32>::new(&[1, 2], vec![1e30, 0.0]).unwrap();
        assert_eq!(softmax(&huge).unwrap().data(), &[1.0, 0.0]);
    }

    mod props {
        use super::*;
        use crate::rng::Rng;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rows_sum_to_one_and_shift_invariant(seed in any::<u64>(), rows in 1usize..5, shift in -50.0f32..50.0) {
                let mut rng = Rng::new(seed);
                let z = Tensor::<f32>::sample_normal(&mut rng, &[rows, 7], 0.0, 5.0).unwrap();
                let p = softmax(&z).unwrap();
                for row in p.data().chunks(7) {
                    let s: f32 = row.iter().sum();
                    prop_assert!((s - 1.0).abs() <= 1e-6);
                    prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                }
                let q = softmax(&z.add_scalar(shift).unwrap()).unwrap();
                for (a, b) in p.data().iter().zip(q.data()) {
                    prop_assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }
}
