//! Patch-based medical image segmentation with extreme random-affine
//! augmentation: NIfTI volume I/O, preprocessing, patch tiling, seeded
//! augmentation, a hand-written residual U-Net trained with soft-Dice
//! loss, and an experiment harness sweeping augmentation level against
//! training-set size on synthetic phantoms.

pub mod augment;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod nifti;
pub mod patch;
pub mod patchio;
pub mod phantom;
pub mod preprocess;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
