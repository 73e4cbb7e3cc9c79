//! 2-D convolution (cross-correlation, no kernel flip) lowered to GEMM via im2col.

use serde::{Deserialize, Serialize};

use super::{check_upstream, he_normal, LayerCache, NnError, Result};
use crate::rng::Rng;
use crate::tensor::{ensure_finite, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2`; odd kernels keep the spatial size at stride 1.
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T: Scalar = f32> {
    /// `[out_ch, in_ch, kh, kw]`
    pub kernels: Tensor<T>,
    /// `[out_ch]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
}

struct Geometry {
    in_ch: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad_h: usize,
    pad_w: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn from_parts(
        kernels: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kernels.rank() != 4 {
            return Err(NnError::InvalidConfig(format!(
                "conv kernels must be rank 4, got {:?}",
                kernels.shape()
            )));
        }
        if bias.shape() != [kernels.shape()[0]] {
            return Err(NnError::InvalidConfig(format!(
                "conv bias {:?} does not match {} output channels",
                bias.shape(),
                kernels.shape()[0]
            )));
        }
        if stride == 0 {
            return Err(NnError::InvalidConfig("conv stride must be ≥ 1".into()));
        }
        let (kh, kw) = (kernels.shape()[2], kernels.shape()[3]);
        if padding == Padding::Same && (kh % 2 == 0 || kw % 2 == 0) {
            return Err(NnError::InvalidConfig(
                "same padding requires odd kernel sizes".into(),
            ));
        }
        Ok(Self {
            kernels,
            bias,
            stride,
            padding,
        })
    }

    /// He-normal kernels, zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut Rng,
    ) -> Result<Self> {
        let shape = [out_ch, in_ch, kernel, kernel];
        let kernels = he_normal(rng, &shape, in_ch * kernel * kernel)?;
        let bias = Tensor::zeros(&[out_ch])?;
        Self::from_parts(kernels, bias, stride, padding)
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    fn pads(&self) -> (usize, usize) {
        let (kh, kw) = self.kernel_size();
        match self.padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (0, 0),
        }
    }

    fn geometry(&self, sample_shape: &[usize]) -> Result<Geometry> {
        let [in_ch, h, w] = *sample_shape else {
            return Err(NnError::InputRank {
                layer: "conv2d",
                expected: 4,
                shape: sample_shape.to_vec(),
            });
        };
        if in_ch != self.in_channels() {
            return Err(NnError::ChannelMismatch {
                layer: "conv2d",
                expected: self.in_channels(),
                actual: in_ch,
            });
        }
        let (kh, kw) = self.kernel_size();
        let (pad_h, pad_w) = self.pads();
        if h + 2 * pad_h < kh || w + 2 * pad_w < kw {
            return Err(NnError::SpatialUnderflow {
                layer: "conv2d",
                input: [h, w],
                window: [kh, kw],
            });
        }
        Ok(Geometry {
            in_ch,
            h,
            w,
            kh,
            kw,
            pad_h,
            pad_w,
            stride: self.stride,
            oh: (h + 2 * pad_h - kh) / self.stride + 1,
            ow: (w + 2 * pad_w - kw) / self.stride + 1,
        })
    }

    pub fn output_shape(&self, sample_shape: &[usize]) -> Result<Vec<usize>> {
        let g = self.geometry(sample_shape)?;
        Ok(vec![self.out_channels(), g.oh, g.ow])
    }

    fn batch_geometry(&self, input: &Tensor<T>) -> Result<Geometry> {
        if input.rank() != 4 {
            return Err(NnError::InputRank {
                layer: "conv2d",
                expected: 4,
                shape: input.shape().to_vec(),
            });
        }
        self.geometry(&input.shape()[1..])
    }

    /// Forward pass without keeping a cache.
    pub fn apply(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.batch_geometry(input)?;
        let batch = input.shape()[0];
        let out_ch = self.out_channels();
        let (patch, positions) = (g.patch_len(), g.positions());
        let item_in = g.in_ch * g.h * g.w;
        let item_out = out_ch * positions;

        let mut cols = vec![T::zero(); patch * positions];
        let mut out = vec![T::zero(); batch * item_out];
        for b in 0..batch {
            im2col(&input.data()[b * item_in..(b + 1) * item_in], &g, &mut cols);
            let dst = &mut out[b * item_out..(b + 1) * item_out];
            for (c, row) in dst.chunks_exact_mut(positions).enumerate() {
                row.fill(self.bias.data()[c]);
            }
            T::gemm(
                out_ch,
                patch,
                positions,
                self.kernels.data(),
                (patch as isize, 1),
                &cols,
                (positions as isize, 1),
                T::one(),
                dst,
            );
        }
        ensure_finite(&out, "conv2d")?;
        Ok(Tensor::from_parts(vec![batch, out_ch, g.oh, g.ow], out))
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>)> {
        let out = self.apply(input)?;
        Ok((
            out,
            LayerCache::Conv {
                input: input.clone(),
            },
        ))
    }

    /// Returns `(d_input, d_kernels, d_bias)`.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        upstream: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let g = self.batch_geometry(input)?;
        let batch = input.shape()[0];
        let out_ch = self.out_channels();
        check_upstream("conv2d", &[batch, out_ch, g.oh, g.ow], upstream)?;
        let (patch, positions) = (g.patch_len(), g.positions());
        let item_in = g.in_ch * g.h * g.w;
        let item_out = out_ch * positions;

        let mut cols = vec![T::zero(); patch * positions];
        let mut dcols = vec![T::zero(); patch * positions];
        let mut dkernels = vec![T::zero(); out_ch * patch];
        let mut dbias = vec![T::zero(); out_ch];
        let mut dinput = vec![T::zero(); input.len()];
        for b in 0..batch {
            let dout = &upstream.data()[b * item_out..(b + 1) * item_out];
            for (c, row) in dout.chunks_exact(positions).enumerate() {
                dbias[c] += row.iter().copied().sum();
            }
            im2col(&input.data()[b * item_in..(b + 1) * item_in], &g, &mut cols);
            // dK[oc, p] += Σ_pos dout[oc, pos] · cols[p, pos]
            T::gemm(
                out_ch,
                positions,
                patch,
                dout,
                (positions as isize, 1),
                &cols,
                (1, positions as isize),
                T::one(),
                &mut dkernels,
            );
            // dcols[p, pos] = Σ_oc K[oc, p] · dout[oc, pos]
            T::gemm(
                patch,
                out_ch,
                positions,
                self.kernels.data(),
                (1, patch as isize),
                dout,
                (positions as isize, 1),
                T::zero(),
                &mut dcols,
            );
            col2im(&dcols, &g, &mut dinput[b * item_in..(b + 1) * item_in]);
        }
        ensure_finite(&dinput, "conv2d backward")?;
        ensure_finite(&dkernels, "conv2d backward")?;
        Ok((
            Tensor::from_parts(input.shape().to_vec(), dinput),
            Tensor::from_parts(self.kernels.shape().to_vec(), dkernels),
            Tensor::from_parts(vec![out_ch], dbias),
        ))
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        Conv2d {
            kernels: self.kernels.cast(),
            bias: self.bias.cast(),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Unfolds one `[in_ch, h, w]` image into `[in_ch·kh·kw, oh·ow]` patch columns.
fn im2col<T: Scalar>(image: &[T], g: &Geometry, cols: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.in_ch {
        let plane = &image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ki) as isize - g.pad_h as isize;
                    let dst_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if y < 0 || y >= g.h as isize {
                        dst_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for (ox, v) in dst_row.iter_mut().enumerate() {
                        let x = (ox * g.stride + kj) as isize - g.pad_w as isize;
                        *v = if x < 0 || x >= g.w as isize {
                            T::zero()
                        } else {
                            src[x as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-column gradients back onto the image.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, image: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.in_ch {
        let plane = &mut image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ki) as isize - g.pad_h as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let x = (ox * g.stride + kj) as isize - g.pad_w as isize;
                        if x >= 0 && x < g.w as isize {
                            dst[x as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}
