//! Central finite-difference check of a layer's analytic gradients.
//!
//! The scalar probed is `<forward(x), r>` for a fixed pseudo-random `r`, so
//! every output element contributes. Errors are reported relative to the
//! largest gradient magnitude seen (analytic or numeric), which keeps
//! entries whose true gradient is zero from dominating the metric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, Mode, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layer: &'static str,
    /// Error of the input gradient.
    pub input_error: f64,
    /// Error of each trainable blob's gradient.
    pub param_errors: Vec<f64>,
    /// Maximum over input and parameters.
    pub max_relative_error: f64,
}

fn probe(layer: &Layer, input: &Tensor, mode: Mode, weights: &Tensor) -> Result<f64> {
    Ok(layer.forward(input, mode)?.dot(weights))
}

pub fn finite_diff_check(layer: &Layer, input: &Tensor, mode: Mode, h: f64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::config(format!(
            "finite-difference step {h} outside [1e-6, 1e-4]"
        )));
    }
    let out = layer.forward(input, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let weights = Tensor::from_vec(
        out.shape(),
        (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let analytic = layer.backward(input, &weights, mode)?;

    let mut x = input.clone();
    let mut numeric_input = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let plus = probe(layer, &x, mode, &weights)?;
        x.data_mut()[i] = orig - h;
        let minus = probe(layer, &x, mode, &weights)?;
        x.data_mut()[i] = orig;
        numeric_input.push((plus - minus) / (2.0 * h));
    }

    let mut numeric_params = Vec::new();
    let mut perturbed = layer.clone();
    let blob_count = layer.params().len();
    for b in 0..blob_count {
        let len = layer.params()[b].len();
        let mut grads = Vec::with_capacity(len);
        for i in 0..len {
            let orig = layer.params()[b][i];
            perturbed.params_mut()[b][i] = orig + h;
            let plus = probe(&perturbed, input, mode, &weights)?;
            perturbed.params_mut()[b][i] = orig - h;
            let minus = probe(&perturbed, input, mode, &weights)?;
            perturbed.params_mut()[b][i] = orig;
            grads.push((plus - minus) / (2.0 * h));
        }
        numeric_params.push(grads);
    }

    let pairs: Vec<(&[f64], &[f64])> = std::iter::once((analytic.input.data(), numeric_input.as_slice()))
        .chain(
            analytic
                .params
                .iter()
                .zip(&numeric_params)
                .map(|(a, n)| (a.as_slice(), n.as_slice())),
        )
        .collect();
    let scale = pairs
        .iter()
        .flat_map(|(a, n)| a.iter().chain(n.iter()))
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let errors: Vec<f64> = pairs
        .iter()
        .map(|(a, n)| a.iter().zip(n.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale)
        .collect();
    let max_relative_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        layer: layer.kind_name(),
        input_error: errors[0],
        param_errors: errors[1..].to_vec(),
        max_relative_error,
    })
}
