//! On-the-fly training augmentation: horizontal flip, one affine warp
//! (rotation, shear, zoom, shift) and a brightness change.

use serde::{Deserialize, Serialize};

use crate::rng::{streams, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("affine matrix is singular (determinant {0})")]
    Singular(f64),
    #[error("brightness factor must be positive, got {0}")]
    NonPositiveBrightness(f64),
    #[error("expected a [channels, height, width] image, got shape {0:?}")]
    ImageRank(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Ranges from which each augmentation parameter is drawn uniformly.
/// Symmetric ranges are given by their half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub flip_prob: f64,
    pub rotation_deg: f64,
    pub shear_deg: f64,
    pub zoom: (f64, f64),
    /// Fraction of the image side.
    pub shift_frac: f64,
    pub brightness: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            rotation_deg: 15.0,
            shear_deg: 10.0,
            zoom: (0.9, 1.1),
            shift_frac: 0.1,
            brightness: (0.8, 1.2),
        }
    }
}

impl AugmentPolicy {
    /// Every range degenerate: augmentation becomes the identity.
    pub fn identity() -> Self {
        Self {
            flip_prob: 0.0,
            rotation_deg: 0.0,
            shear_deg: 0.0,
            zoom: (1.0, 1.0),
            shift_frac: 0.0,
            brightness: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AugmentError::InvalidPolicy(msg));
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad(format!("flip_prob {} is outside [0, 1]", self.flip_prob));
        }
        for (name, v) in [
            ("rotation_deg", self.rotation_deg),
            ("shear_deg", self.shear_deg),
            ("shift_frac", self.shift_frac),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite half-width >= 0, got {v}"));
            }
        }
        if self.shear_deg >= 90.0 {
            return bad(format!("shear_deg must be below 90, got {}", self.shear_deg));
        }
        for (name, (lo, hi)) in [("zoom", self.zoom), ("brightness", self.brightness)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) must be positive and ordered"));
            }
        }
        Ok(())
    }
}

/// 2×3 matrix taking output pixel coordinates `(x, y)` (column, row) to the
/// source coordinates that are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    matrix: [[f64; 3]; 2],
}

impl AffineParams {
    pub fn new(matrix: [[f64; 3]; 2]) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if !det.is_finite() || det.abs() < 1e-12 || matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AugmentError::Singular(det));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Moves image content by `(dx, dy)` pixels.
    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            matrix: [[1.0, 0.0, -dx], [0.0, 1.0, -dy]],
        }
    }

    /// Forward transform `shift ∘ rotation ∘ shear ∘ zoom` about the center of
    /// a `side × side` image, stored as its inverse.
    pub fn compose(rotation_deg: f64, shear_deg: f64, zoom: f64, shift: (f64, f64), side: usize) -> Result<Self> {
        let (sin, cos) = rotation_deg.to_radians().sin_cos();
        let tan = shear_deg.to_radians().tan();
        // rotation · shear · zoom
        let a = [[cos * zoom, (cos * tan - sin) * zoom], [sin * zoom, (sin * tan + cos) * zoom]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(AugmentError::Singular(det));
        }
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        // source = c + inv · (out − c − t)
        let c = (side as f64 - 1.0) / 2.0;
        let (ox, oy) = (c + shift.0, c + shift.1);
        let tx = c - (inv[0][0] * ox + inv[0][1] * oy);
        let ty = c - (inv[1][0] * ox + inv[1][1] * oy);
        Self::new([[inv[0][0], inv[0][1], tx], [inv[1][0], inv[1][1], ty]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 2] {
        self.matrix
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    fn source(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }
}

/// One concrete draw from an [`AugmentPolicy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub rotation_deg: f64,
    pub shear_deg: f64,
    pub zoom: f64,
    /// Pixels, `(x, y)`.
    pub shift: (f64, f64),
    pub brightness: f64,
}

impl AugmentParams {
    pub fn affine(&self, side: usize) -> Result<AffineParams> {
        AffineParams::compose(self.rotation_deg, self.shear_deg, self.zoom, self.shift, side)
    }
}

/// Draws every parameter uniformly from its range, in a fixed order.
pub fn sample_params(policy: &AugmentPolicy, side: usize, rng: &mut Rng) -> AugmentParams {
    let flip = rng.uniform() < policy.flip_prob;
    let rotation_deg = rng.uniform_range(-policy.rotation_deg, policy.rotation_deg);
    let shear_deg = rng.uniform_range(-policy.shear_deg, policy.shear_deg);
    let zoom = rng.uniform_range(policy.zoom.0, policy.zoom.1);
    let max_shift = policy.shift_frac * side as f64;
    let shift = (
        rng.uniform_range(-max_shift, max_shift),
        rng.uniform_range(-max_shift, max_shift),
    );
    let brightness = rng.uniform_range(policy.brightness.0, policy.brightness.1);
    AugmentParams {
        flip,
        rotation_deg,
        shear_deg,
        zoom,
        shift,
        brightness,
    }
}

fn dims(image: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(AugmentError::ImageRank(image.shape().to_vec())),
    }
}

/// Bilinear resampling with edge replication outside the image.
pub fn apply_affine(image: &Tensor<f32>, params: &AffineParams) -> Result<Tensor<f32>> {
    let (channels, h, w) = dims(image)?;
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..channels {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let at = |r: isize, c: isize| {
            let r = r.clamp(0, h as isize - 1) as usize;
            let c = c.clamp(0, w as isize - 1) as usize;
            plane[r * w + c] as f64
        };
        for r in 0..h {
            for c in 0..w {
                let (sx, sy) = params.source(c as f64, r as f64);
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                    + at(y0, x0 + 1) * fx * (1.0 - fy)
                    + at(y0 + 1, x0) * (1.0 - fx) * fy
                    + at(y0 + 1, x0 + 1) * fx * fy;
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(Tensor::from_parts(image.shape().to_vec(), out))
}

pub fn horizontal_flip(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, _, w) = dims(image)?;
    let out = image
        .data()
        .chunks_exact(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    Ok(Tensor::from_parts(image.shape().to_vec(), out))
}

/// Scales every pixel by `factor` and clamps to `[0, 1]`.
pub fn brightness(image: &Tensor<f32>, factor: f64) -> Result<Tensor<f32>> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::NonPositiveBrightness(factor));
    }
    let out = image
        .data()
        .iter()
        .map(|&p| (p as f64 * factor).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(Tensor::from_parts(image.shape().to_vec(), out))
}

/// Flip, then the affine warp, then brightness.
pub fn augment(image: &Tensor<f32>, policy: &AugmentPolicy, rng: &mut Rng) -> Result<Tensor<f32>> {
    policy.validate()?;
    let (_, h, w) = dims(image)?;
    let params = sample_params(policy, h.max(w), rng);
    let mut out = if params.flip {
        horizontal_flip(image)?
    } else {
        image.clone()
    };
    let affine = params.affine(h.max(w))?;
    if !affine.is_identity() {
        out = apply_affine(&out, &affine)?;
    }
    if params.brightness != 1.0 {
        out = brightness(&out, params.brightness)?;
    }
    Ok(out)
}

/// Augments sample `index` of epoch `epoch` from its own random stream, so
/// the result depends only on `(seed, epoch, index)`.
pub fn augment_sample(
    image: &Tensor<f32>,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: usize,
    index: usize,
) -> Result<Tensor<f32>> {
    let mut rng = Rng::stream(seed, &[streams::AUGMENT, epoch as u64, index as u64]);
    augment(image, policy, &mut rng)
}
