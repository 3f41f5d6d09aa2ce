use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::augment_batch;
use super::model::{CaeModel, EpochLoss};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction held out for validation, in `(0, 1)`.
    pub val_split: f64,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            val_split: 0.2,
            seed: 0,
            augment: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return Err(Error::config(format!(
                "val_split must lie in (0, 1), got {}",
                self.val_split
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config(
                "learning_rate must be positive and weight_decay nonnegative",
            ));
        }
        Ok(())
    }

    /// `(train, validation)` sizes for `n` images.
    pub fn split_sizes(&self, n: usize) -> (usize, usize) {
        let val = ((n as f64) * self.val_split).round() as usize;
        (n - val, val)
    }
}

/// Shuffled index batches; a trailing batch of one sample is folded into the
/// previous batch, since batch norm cannot train on a single sample.
fn batches(indices: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = indices.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("checked non-empty");
        out.last_mut().expect("checked len > 1").extend(last);
    }
    out
}

/// Fits the autoencoder to reconstruct `images`; labels never enter.
///
/// A seeded shuffle holds out `val_split` of the images for validation.
/// Every epoch is one pass over the rest in shuffled batches; validation
/// loss uses eval-mode batch norm and no augmentation.
pub fn train(mut model: CaeModel, images: &Tensor, config: &TrainConfig) -> Result<CaeModel> {
    config.validate()?;
    if config.epochs == 0 {
        return Ok(model);
    }
    let n = images.batch();
    if n < config.batch_size {
        return Err(Error::config(format!(
            "{n} images is fewer than one batch of {}",
            config.batch_size
        )));
    }
    let (n_train, n_val) = config.split_sizes(n);
    if n_train < 2 || n_val == 0 {
        return Err(Error::config(format!(
            "split of {n} images leaves {n_train} for training and {n_val} for validation"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (train_idx, val_idx) = order.split_at(n_train);
    let val_images = images.select(val_idx);
    let mut train_idx = train_idx.to_vec();

    let mut optimizer = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });

    let first_epoch = model.training_log.last().map_or(1, |e| e.epoch + 1);
    for epoch in first_epoch..first_epoch + config.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch_idx) in batches(&train_idx, config.batch_size).iter().enumerate() {
            let batch = augment_batch(&images.select(batch_idx), rng.random(), config.augment);
            let loss = model.train_step(&batch, &mut optimizer).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!(
                    "{msg} at epoch {epoch}, batch {b}; lower the learning rate or check the initialization"
                )),
                other => other,
            })?;
            total += loss * batch_idx.len() as f64;
        }
        let train_loss = total / n_train as f64;
        let val_loss = model.evaluation_loss(&val_images)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "validation loss is {val_loss} at epoch {epoch}"
            )));
        }
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        model.training_log.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
    }
    model.trained = true;
    Ok(model)
}

/// `epoch,train_loss,val_loss` rows with a header.
pub fn loss_curve_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
    }
    out
}
