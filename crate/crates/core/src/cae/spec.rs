use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ActivationKind, ConvGeometry, LayerSpec, PoolKind};

/// Width of the flattened encoder output.
pub const LATENT_DIM: usize = 64;

/// Input shapes the two built-in architectures accept.
pub const SUPPORTED_INPUTS: [[usize; 3]; 3] = [[1, 28, 28], [3, 32, 32], [1, 32, 32]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Plain 4-stage conv/batch-norm encoder with a 5-layer transposed
    /// decoder. Modelled on ResNet10 but without skip connections.
    #[serde(alias = "resnet10-inspired")]
    Resnet10,
    /// Three stride-2 convolutions (16 -> 8 -> 4 channels) and their
    /// transposed mirror; used per channel in the channel-wise ensemble.
    #[serde(alias = "simplified-channelwise")]
    Simplified,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resnet10" | "resnet10-inspired" => Ok(Architecture::Resnet10),
            "simplified" | "simplified-channelwise" => Ok(Architecture::Simplified),
            other => Err(Error::config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `None` for hand-assembled networks.
    pub architecture: Option<Architecture>,
    pub input_shape: [usize; 3],
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    /// Decoder output is cropped to this `(H, W)` before the loss.
    pub crop_target: (usize, usize),
}

impl NetworkSpec {
    /// Validates shape algebra: the encoder must flatten to exactly
    /// [`LATENT_DIM`] values and the decoder must restore the input channels
    /// at a size that can be cropped back to the input.
    pub fn new(
        architecture: Option<Architecture>,
        input_shape: [usize; 3],
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
    ) -> Result<Self> {
        let spec = Self {
            architecture,
            input_shape,
            encoder,
            decoder,
            crop_target: (input_shape[1], input_shape[2]),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let latent = self.latent_shape()?;
        let flat: usize = latent.iter().product();
        if flat != LATENT_DIM {
            return Err(Error::config(format!(
                "encoder output {latent:?} flattens to {flat} features, expected {LATENT_DIM}"
            )));
        }
        let out = self.decoder_output_shape()?;
        let [c, h, w] = self.input_shape;
        if out[0] != c {
            return Err(Error::config(format!(
                "decoder emits {} channels, input has {c}",
                out[0]
            )));
        }
        if self.crop_target != (h, w) || out[1] < h || out[2] < w {
            return Err(Error::config(format!(
                "decoder output {}x{} cannot be cropped to input {h}x{w}",
                out[1], out[2]
            )));
        }
        Ok(())
    }

    pub fn latent_shape(&self) -> Result<[usize; 3]> {
        self.encoder
            .iter()
            .try_fold(self.input_shape, |shape, layer| layer.output_shape(shape))
    }

    pub fn decoder_output_shape(&self) -> Result<[usize; 3]> {
        let latent = self.latent_shape()?;
        self.decoder
            .iter()
            .try_fold(latent, |shape, layer| layer.output_shape(shape))
    }

    /// Shapes after every encoder layer, in order.
    pub fn encoder_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shape = self.input_shape;
        self.encoder
            .iter()
            .map(|l| {
                shape = l.output_shape(shape)?;
                Ok(shape)
            })
            .collect()
    }

    pub fn decoder_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shape = self.latent_shape()?;
        self.decoder
            .iter()
            .map(|l| {
                shape = l.output_shape(shape)?;
                Ok(shape)
            })
            .collect()
    }
}

impl std::fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.architecture {
            Some(Architecture::Resnet10) => "resnet10",
            Some(Architecture::Simplified) => "simplified",
            None => "custom",
        };
        writeln!(f, "architecture: {name}")?;
        writeln!(f, "input: {:?}", self.input_shape)?;
        let enc = self.encoder_shapes().map_err(|_| std::fmt::Error)?;
        writeln!(f, "encoder:")?;
        for (i, (l, s)) in self.encoder.iter().zip(&enc).enumerate() {
            writeln!(f, "  [{i}] {l} -> {s:?}")?;
        }
        writeln!(f, "latent: {LATENT_DIM}")?;
        let dec = self.decoder_shapes().map_err(|_| std::fmt::Error)?;
        writeln!(f, "decoder:")?;
        let offset = self.encoder.len();
        for (i, (l, s)) in self.decoder.iter().zip(&dec).enumerate() {
            writeln!(f, "  [{}] {l} -> {s:?}", offset + i)?;
        }
        writeln!(f, "crop: {}x{}", self.crop_target.0, self.crop_target.1)
    }
}

fn conv(cin: usize, cout: usize, k: usize, s: usize, p: usize) -> LayerSpec {
    LayerSpec::Conv {
        in_channels: cin,
        out_channels: cout,
        geometry: ConvGeometry::new(k, s, p),
    }
}

fn tconv(cin: usize, cout: usize, k: usize, s: usize, p: usize, op: usize) -> LayerSpec {
    LayerSpec::ConvTranspose {
        in_channels: cin,
        out_channels: cout,
        geometry: ConvGeometry::new(k, s, p).with_output_padding(op),
    }
}

const RELU: LayerSpec = LayerSpec::Activation(ActivationKind::Relu);
const TANH: LayerSpec = LayerSpec::Activation(ActivationKind::Tanh);

fn bn(channels: usize) -> LayerSpec {
    LayerSpec::BatchNorm { channels }
}

pub fn build_network(architecture: Architecture, input_shape: [usize; 3]) -> Result<NetworkSpec> {
    if !SUPPORTED_INPUTS.contains(&input_shape) {
        return Err(Error::config(format!(
            "unsupported input shape {input_shape:?}; expected one of {SUPPORTED_INPUTS:?}"
        )));
    }
    let c = input_shape[0];
    let (encoder, decoder) = match architecture {
        Architecture::Resnet10 => (
            vec![
                conv(c, 64, 7, 2, 3),
                bn(64),
                RELU,
                LayerSpec::Pool(PoolKind::Max { size: 2 }),
                conv(64, 128, 3, 2, 1),
                bn(128),
                RELU,
                conv(128, 256, 3, 2, 1),
                bn(256),
                RELU,
                conv(256, 64, 3, 2, 1),
                bn(64),
                RELU,
                LayerSpec::Pool(PoolKind::AdaptiveAvg { height: 1, width: 1 }),
            ],
            vec![
                // padding 0 on the first layer is forced by (64,1,1) -> (32,4,4)
                tconv(64, 32, 4, 2, 0, 0),
                RELU,
                tconv(32, 16, 4, 2, 1, 0),
                RELU,
                tconv(16, 8, 4, 2, 1, 0),
                RELU,
                tconv(8, 4, 4, 2, 1, 0),
                RELU,
                // keeps 32x32 so the crop only trims for 28x28 inputs
                tconv(4, c, 3, 1, 1, 0),
                TANH,
            ],
        ),
        Architecture::Simplified => (
            vec![
                conv(c, 16, 3, 2, 1),
                RELU,
                conv(16, 8, 3, 2, 1),
                RELU,
                conv(8, 4, 3, 2, 1),
                RELU,
            ],
            vec![
                tconv(4, 8, 3, 2, 1, 1),
                RELU,
                tconv(8, 16, 3, 2, 1, 1),
                RELU,
                tconv(16, c, 3, 2, 1, 1),
                TANH,
            ],
        ),
    };
    NetworkSpec::new(Some(architecture), input_shape, encoder, decoder)
}
