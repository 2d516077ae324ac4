//! Residual U-Net with hand-written forward/backward passes, soft-Dice
//! loss and Adam.

pub mod adam;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use layers::{Conv2d, MaxPool2x2, ResidualBlock, UpsampleNearest2x};
pub use loss::{soft_dice_loss, DiceLossConfig};
pub use network::{Network, NetworkConfig};
pub use tensor::Tensor4;
pub use train::{predict_volume, train, TrainConfig};
