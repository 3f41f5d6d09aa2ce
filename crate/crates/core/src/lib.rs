//! Hybrid image-classification pipeline: a convolutional autoencoder
//! compresses images to 64 latent features, which are amplitude-encoded
//! into a 6-qubit statevector; the resulting fidelity kernel drives
//! class-weighted SVMs and one-class SVMs.
//!
//! Modules, bottom-up:
//! - [`nn`]: tensors, layers with analytic gradients, Adam.
//! - [`cae`]: the two autoencoder architectures, training, feature extraction.
//! - [`qkernel`]: statevector simulation, amplitude-encoding circuits, fidelity kernel.
//! - [`svm`]: SMO solvers for weighted C-SVM and ν-one-class SVM on precomputed kernels.
//! - [`metrics`]: confusion matrix, the ten evaluation metrics, multi-run aggregation.
//! - [`data`]: dataset readers, preprocessing, stratified subsampling.
//! - [`pipeline`]: end-to-end experiments and their artifacts.

pub mod cae;
pub mod data;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod qkernel;
pub mod svm;

pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
