//! Facial-expression recognition with a from-scratch convolutional network.

pub mod augment;
pub mod data;
pub mod gradcheck;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod store;
pub mod tensor;
pub mod train;

pub use rng::Rng;
pub use tensor::{Reduction, Scalar, Tensor, TensorError};

/// Expression classes: angry, disgust, fear, happy, sad, surprise, neutral.
pub const NUM_CLASSES: usize = 7;
/// Images are square grayscale crops of this side length.
pub const IMAGE_SIDE: usize = 48;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
