//! Convolutional autoencoder used as a 64-dimensional feature extractor.

mod augment;
mod checkpoint;
mod model;
mod spec;
mod train;

pub use augment::{
    augment_batch, flip_horizontal, flip_vertical, rotate, sample_rotation_deg, FLIP_PROBABILITY, MAX_ROTATION_DEG,
};
pub use checkpoint::{decode, encode, load, save, sidecar_path};
pub use model::{CaeModel, EpochLoss};
pub use spec::{build_network, Architecture, NetworkSpec, LATENT_DIM, SUPPORTED_INPUTS};
pub use train::{loss_curve_csv, train, TrainConfig};
