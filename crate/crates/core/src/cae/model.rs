use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{NetworkSpec, LATENT_DIM};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{mse_loss, per_sample_mse, Adam, Layer, Mode, Tensor};

/// Rows handed to the network at once during inference.
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub spec: NetworkSpec,
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub training_log: Vec<EpochLoss>,
    pub trained: bool,
}

/// Output of a training-mode forward pass with everything backward needs.
struct ForwardTrace {
    /// Input of every encoder layer followed by every decoder layer.
    layer_inputs: Vec<Tensor>,
    /// Uncropped decoder output.
    output: Tensor,
}

impl CaeModel {
    /// Fresh parameters: Kaiming conv weights, zero biases, identity batch norm.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = spec.encoder.iter().map(|l| l.instantiate(&mut rng)).collect();
        let decoder = spec.decoder.iter().map(|l| l.instantiate(&mut rng)).collect();
        Ok(Self {
            spec,
            encoder,
            decoder,
            training_log: Vec::new(),
            trained: false,
        })
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().flat_map(|l| l.params()).map(<[f64]>::len).sum()
    }

    fn check_images(&self, images: &Tensor) -> Result<()> {
        if images.sample_shape() != self.spec.input_shape {
            return Err(Error::shape(format!(
                "images of shape {:?} do not match network input {:?}",
                images.sample_shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    fn ensure_trained(&self) -> Result<()> {
        if !self.trained {
            return Err(Error::config("autoencoder has not been trained"));
        }
        Ok(())
    }

    fn encode(&self, images: &Tensor, mode: Mode) -> Result<Tensor> {
        self.encoder.iter().try_fold(images.clone(), |x, l| l.forward(&x, mode))
    }

    fn decode(&self, latent: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = self
            .decoder
            .iter()
            .try_fold(latent.clone(), |x, l| l.forward(&x, mode))?;
        out.crop(self.spec.crop_target.0, self.spec.crop_target.1)
    }

    /// Encoder then decoder, cropped to the input size.
    pub fn forward(&self, images: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_images(images)?;
        self.decode(&self.encode(images, mode)?, mode)
    }

    fn forward_traced(&self, images: &Tensor) -> Result<ForwardTrace> {
        let mut layer_inputs = Vec::with_capacity(self.encoder.len() + self.decoder.len());
        let mut x = images.clone();
        for layer in self.layers() {
            let y = layer.forward(&x, Mode::Train)?;
            layer_inputs.push(x);
            x = y;
        }
        Ok(ForwardTrace {
            layer_inputs,
            output: x,
        })
    }

    fn backprop(&self, batch: &Tensor) -> Result<(f64, Vec<Vec<f64>>, ForwardTrace)> {
        self.check_images(batch)?;
        let trace = self.forward_traced(batch)?;
        let (h, w) = self.spec.crop_target;
        let (loss, grad) = mse_loss(&trace.output.crop(h, w)?, batch)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("reconstruction loss is {loss}")));
        }
        let mut grad = grad.uncrop(trace.output.height(), trace.output.width())?;
        let layers: Vec<&Layer> = self.layers().collect();
        let mut per_layer = vec![Vec::new(); layers.len()];
        for (i, layer) in layers.iter().enumerate().rev() {
            let g = layer.backward(&trace.layer_inputs[i], &grad, Mode::Train)?;
            per_layer[i] = g.params;
            grad = g.input;
        }
        Ok((loss, per_layer.into_iter().flatten().collect(), trace))
    }

    /// Reconstruction loss of the batch in train mode, with gradients for
    /// every trainable blob in [`Layer::params`] order across all layers.
    pub fn loss_and_gradients(&self, batch: &Tensor) -> Result<(f64, Vec<Vec<f64>>)> {
        let (loss, grads, _) = self.backprop(batch)?;
        Ok((loss, grads))
    }

    /// One optimizer step on `batch`; returns the batch loss before the step.
    pub fn train_step(&mut self, batch: &Tensor, optimizer: &mut Adam) -> Result<f64> {
        let (loss, grads, trace) = self.backprop(batch)?;
        for (layer, input) in self.layers_mut().zip(&trace.layer_inputs) {
            layer.observe_batch(input)?;
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let mut params: Vec<&mut [f64]> = self.layers_mut().flat_map(|l| l.params_mut()).collect();
        optimizer.update(&mut params, &grad_refs)?;
        Ok(loss)
    }

    /// Mean reconstruction MSE in eval mode, without touching any state.
    pub fn evaluation_loss(&self, images: &Tensor) -> Result<f64> {
        self.check_images(images)?;
        let mut total = 0.0;
        for chunk in chunks(images.batch()) {
            let batch = images.select(&chunk);
            let out = self.forward(&batch, Mode::Eval)?;
            total += per_sample_mse(&out, &batch)?.iter().sum::<f64>();
        }
        Ok(total / images.batch().max(1) as f64)
    }

    /// Flattened latent of every image (`n x 64`), batch norm in eval mode.
    pub fn extract_features(&self, images: &Tensor) -> Result<Matrix> {
        self.ensure_trained()?;
        self.check_images(images)?;
        let mut data = Vec::with_capacity(images.batch() * LATENT_DIM);
        for chunk in chunks(images.batch()) {
            let latent = self.encode(&images.select(&chunk), Mode::Eval)?;
            data.extend_from_slice(latent.data());
        }
        Matrix::from_vec(images.batch(), LATENT_DIM, data)
    }

    /// Cropped reconstructions and the MSE of each image.
    pub fn reconstruct(&self, images: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        self.ensure_trained()?;
        self.check_images(images)?;
        let mut data = Vec::with_capacity(images.len());
        let mut errors = Vec::with_capacity(images.batch());
        for chunk in chunks(images.batch()) {
            let batch = images.select(&chunk);
            let out = self.forward(&batch, Mode::Eval)?;
            errors.extend(per_sample_mse(&out, &batch)?);
            data.extend_from_slice(out.data());
        }
        Ok((Tensor::from_vec(images.shape(), data)?, errors))
    }

    /// Final-epoch training loss, if any training happened.
    pub fn final_train_loss(&self) -> Option<f64> {
        self.training_log.last().map(|e| e.train_loss)
    }
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n)
        .step_by(INFERENCE_CHUNK)
        .map(move |start| (start..(start + INFERENCE_CHUNK).min(n)).collect())
}
