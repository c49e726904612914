//! Pose-driven image generation building blocks: joint heat maps, rigid
//! body-region decomposition, per-part affine fitting, deformable feature
//! warping, a nearest-neighbour reconstruction loss, a small
//! hand-differentiated layer set with Adam, the generator/discriminator
//! pair assembled from them, SSIM evaluation, and the file formats tying it
//! all together.

pub mod affine;
pub mod error;
pub mod gan;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod nnloss;
pub mod optim;
pub mod plan;
pub mod pose;
pub mod region;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
pub use tensor::{FeatureMap, Grid, Tensor, Tensor4};
