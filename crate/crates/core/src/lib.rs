//! Checkerboard-kernel convolutional network for detecting gravity-wave
//! ripples in noisy grayscale satellite patches.

pub mod data;
pub mod error;
pub mod filters;
pub mod io;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use data::{Label, NoiseProfile, PatchDataset, Split};
pub use error::{Error, Result};
pub use filters::{Image, KernelSpec};
pub use model::{Network, NetworkConfig, TrainMode};
pub use tensor::{Matrix, Rng, Shape, Tensor};
pub use train::{Metrics, RunHistory, TrainConfig};
