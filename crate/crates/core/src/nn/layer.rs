use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{activation, activation_backward, ActivationKind};
use super::batchnorm::{batchnorm2d, batchnorm2d_backward, update_running_stats, BatchNormParams};
use super::conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvGeometry, ConvParams};
use super::pool::{pool2d, pool2d_backward, PoolKind};
use super::{Mode, Tensor};
use crate::error::{Error, Result};

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    },
    BatchNorm {
        channels: usize,
    },
    Pool(PoolKind),
    Activation(ActivationKind),
}

impl LayerSpec {
    pub fn output_shape(&self, [c, h, w]: [usize; 3]) -> Result<[usize; 3]> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                geometry,
            } => {
                expect_channels(c, in_channels, "conv")?;
                Ok([out_channels, geometry.conv_output_len(h)?, geometry.conv_output_len(w)?])
            }
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                geometry,
            } => {
                expect_channels(c, in_channels, "conv transpose")?;
                Ok([
                    out_channels,
                    geometry.transpose_output_len(h)?,
                    geometry.transpose_output_len(w)?,
                ])
            }
            LayerSpec::BatchNorm { channels } => {
                expect_channels(c, channels, "batch norm")?;
                Ok([c, h, w])
            }
            LayerSpec::Pool(kind) => {
                let (oh, ow) = kind.output_hw(h, w)?;
                Ok([c, oh, ow])
            }
            LayerSpec::Activation(_) => Ok([c, h, w]),
        }
    }

    pub fn instantiate<R: Rng + ?Sized>(&self, rng: &mut R) -> Layer {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                geometry,
            } => {
                let k = geometry.kernel;
                Layer::Conv {
                    params: ConvParams::kaiming(in_channels, out_channels, k, in_channels * k * k, rng),
                    geometry,
                }
            }
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                geometry,
            } => {
                let k = geometry.kernel;
                // each output pixel sees roughly (k / stride)^2 taps per input channel
                let taps = k.div_ceil(geometry.stride);
                Layer::ConvTranspose {
                    params: ConvParams::kaiming(in_channels, out_channels, k, in_channels * taps * taps, rng),
                    geometry,
                }
            }
            LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNormParams::new(channels)),
            LayerSpec::Pool(kind) => Layer::Pool(kind),
            LayerSpec::Activation(kind) => Layer::Activation(kind),
        }
    }
}

impl std::fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                geometry: g,
            } => write!(
                f,
                "Conv2d({in_channels}->{out_channels}, k={}, s={}, p={})",
                g.kernel, g.stride, g.padding
            ),
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                geometry: g,
            } => write!(
                f,
                "ConvTranspose2d({in_channels}->{out_channels}, k={}, s={}, p={}, op={})",
                g.kernel, g.stride, g.padding, g.output_padding
            ),
            LayerSpec::BatchNorm { channels } => write!(f, "BatchNorm2d({channels})"),
            LayerSpec::Pool(PoolKind::Max { size }) => write!(f, "MaxPool2d({size})"),
            LayerSpec::Pool(PoolKind::AdaptiveAvg { height, width }) => {
                write!(f, "AdaptiveAvgPool2d({height}x{width})")
            }
            LayerSpec::Activation(ActivationKind::Relu) => write!(f, "ReLU"),
            LayerSpec::Activation(ActivationKind::Tanh) => write!(f, "Tanh"),
        }
    }
}

fn expect_channels(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what} expects {want} input channels, got {got}")));
    }
    Ok(())
}

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { params: ConvParams, geometry: ConvGeometry },
    ConvTranspose { params: ConvParams, geometry: ConvGeometry },
    BatchNorm(BatchNormParams),
    Pool(PoolKind),
    Activation(ActivationKind),
}

/// Gradients of a layer: w.r.t. its input, and w.r.t. each trainable blob
/// in the order of [`Layer::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: Tensor,
    pub params: Vec<Vec<f64>>,
}

impl Layer {
    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv { params, geometry } => conv2d(input, params, *geometry),
            Layer::ConvTranspose { params, geometry } => conv_transpose2d(input, params, *geometry),
            Layer::BatchNorm(p) => batchnorm2d(input, p, mode),
            Layer::Pool(kind) => pool2d(input, *kind),
            Layer::Activation(kind) => Ok(activation(input, *kind)),
        }
    }

    pub fn backward(&self, input: &Tensor, grad_output: &Tensor, mode: Mode) -> Result<LayerGrads> {
        match self {
            Layer::Conv { params, geometry } => {
                let g = conv2d_backward(input, params, *geometry, grad_output)?;
                Ok(LayerGrads {
                    input: g.input,
                    params: vec![g.weight, g.bias],
                })
            }
            Layer::ConvTranspose { params, geometry } => {
                let g = conv_transpose2d_backward(input, params, *geometry, grad_output)?;
                Ok(LayerGrads {
                    input: g.input,
                    params: vec![g.weight, g.bias],
                })
            }
            Layer::BatchNorm(p) => {
                let g = batchnorm2d_backward(input, p, mode, grad_output)?;
                Ok(LayerGrads {
                    input: g.input,
                    params: vec![g.gamma, g.beta],
                })
            }
            Layer::Pool(kind) => Ok(LayerGrads {
                input: pool2d_backward(input, *kind, grad_output)?,
                params: Vec::new(),
            }),
            Layer::Activation(kind) => Ok(LayerGrads {
                input: activation_backward(input, *kind, grad_output)?,
                params: Vec::new(),
            }),
        }
    }

    /// Running-statistics transition for batch norm; no-op elsewhere.
    pub fn observe_batch(&mut self, input: &Tensor) -> Result<()> {
        if let Layer::BatchNorm(p) = self {
            update_running_stats(p, input)?;
        }
        Ok(())
    }

    /// Trainable parameter blobs.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv { params, .. } | Layer::ConvTranspose { params, .. } => {
                vec![&params.weight, &params.bias]
            }
            Layer::BatchNorm(p) => vec![&p.gamma, &p.beta],
            Layer::Pool(_) | Layer::Activation(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv { params, .. } | Layer::ConvTranspose { params, .. } => {
                vec![&mut params.weight, &mut params.bias]
            }
            Layer::BatchNorm(p) => vec![&mut p.gamma, &mut p.beta],
            Layer::Pool(_) | Layer::Activation(_) => Vec::new(),
        }
    }

    /// Every persisted blob: trainable parameters plus batch-norm running
    /// statistics.
    pub fn state(&self) -> Vec<&[f64]> {
        match self {
            Layer::BatchNorm(p) => vec![&p.gamma, &p.beta, &p.running_mean, &p.running_var],
            _ => self.params(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv { params, .. } | Layer::ConvTranspose { params, .. } => {
                vec![&mut params.weight, &mut params.bias]
            }
            Layer::BatchNorm(p) => vec![&mut p.gamma, &mut p.beta, &mut p.running_mean, &mut p.running_var],
            Layer::Pool(_) | Layer::Activation(_) => Vec::new(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv2d",
            Layer::ConvTranspose { .. } => "conv_transpose2d",
            Layer::BatchNorm(_) => "batchnorm2d",
            Layer::Pool(PoolKind::Max { .. }) => "max_pool2d",
            Layer::Pool(PoolKind::AdaptiveAvg { .. }) => "adaptive_avg_pool2d",
            Layer::Activation(ActivationKind::Relu) => "relu",
            Layer::Activation(ActivationKind::Tanh) => "tanh",
        }
    }
}
