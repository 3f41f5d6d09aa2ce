//! Differentiable layers with hand-derived gradients, MSE loss and Adam.
//!
//! Every op is a pure function of its inputs. Backward functions take the
//! forward input again instead of relying on hidden caches, and batch-norm
//! running statistics change only through [`Layer::observe_batch`].

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod gradcheck;
mod layer;
mod loss;
mod pool;
mod tensor;

pub use activation::{activation, activation_backward, ActivationKind};
pub use adam::{Adam, AdamConfig};
pub use batchnorm::{
    batch_statistics, batchnorm2d, batchnorm2d_backward, update_running_stats, BatchNormGrads, BatchNormParams,
    DEFAULT_EPS, DEFAULT_MOMENTUM,
};
pub use conv::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvGeometry, ConvGrads, ConvParams,
};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use layer::{Layer, LayerGrads, LayerSpec};
pub use loss::{mse_loss, per_sample_mse};
pub use pool::{pool2d, pool2d_backward, PoolKind};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch norm normalizes with batch statistics.
    Train,
    /// Batch norm normalizes with running statistics.
    Eval,
}
