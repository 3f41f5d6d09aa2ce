use serde::{Deserialize, Serialize};

use super::{Mode, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    /// Strictly positive.
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor) -> Result<()> {
        let c = self.channels();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::shape("batch norm parameter vectors differ in length"));
        }
        if input.channels() != c {
            return Err(Error::shape(format!(
                "batch norm over {c} channels got input with {}",
                input.channels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Biased per-channel mean and variance over batch and space.
pub fn batch_statistics(input: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let count = (n * plane) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut acc = 0.0;
        for s in 0..n {
            acc += input.sample(s)[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
        }
        let m = acc / count;
        let mut sq = 0.0;
        for s in 0..n {
            sq += input.sample(s)[ch * plane..(ch + 1) * plane]
                .iter()
                .map(|v| (v - m) * (v - m))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = sq / count;
    }
    (mean, var)
}

fn ensure_trainable_batch(input: &Tensor) -> Result<()> {
    if input.batch() < 2 {
        return Err(Error::shape(format!(
            "batch norm in train mode needs a batch of at least 2, got {}",
            input.batch()
        )));
    }
    Ok(())
}

fn normalization(input: &Tensor, params: &BatchNormParams, mode: Mode) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check(input)?;
    match mode {
        Mode::Train => {
            ensure_trainable_batch(input)?;
            let (mean, var) = batch_statistics(input);
            let inv_std = var.iter().map(|v| 1.0 / (v + params.eps).sqrt()).collect();
            Ok((mean, inv_std))
        }
        Mode::Eval => {
            let inv_std = params
                .running_var
                .iter()
                .map(|v| 1.0 / (v + params.eps).sqrt())
                .collect();
            Ok((params.running_mean.clone(), inv_std))
        }
    }
}

pub fn batchnorm2d(input: &Tensor, params: &BatchNormParams, mode: Mode) -> Result<Tensor> {
    let (mean, inv_std) = normalization(input, params, mode)?;
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let mut out = input.clone();
    for s in 0..n {
        let x = out.sample_mut(s);
        for ch in 0..c {
            let scale = params.gamma[ch] * inv_std[ch];
            let shift = params.beta[ch] - mean[ch] * scale;
            for v in &mut x[ch * plane..(ch + 1) * plane] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(out)
}

pub fn batchnorm2d_backward(
    input: &Tensor,
    params: &BatchNormParams,
    mode: Mode,
    grad_output: &Tensor,
) -> Result<BatchNormGrads> {
    input.ensure_same_shape(grad_output, "batch norm backward")?;
    let (mean, inv_std) = normalization(input, params, mode)?;
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let count = (n * plane) as f64;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_gamma = vec![0.0; c];
    let mut grad_beta = vec![0.0; c];
    for ch in 0..c {
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for s in 0..n {
            let x = &input.sample(s)[ch * plane..(ch + 1) * plane];
            let g = &grad_output.sample(s)[ch * plane..(ch + 1) * plane];
            for (xv, gv) in x.iter().zip(g) {
                sum_g += gv;
                sum_gx += gv * (xv - mean[ch]) * inv_std[ch];
            }
        }
        grad_gamma[ch] = sum_gx;
        grad_beta[ch] = sum_g;
        let scale = params.gamma[ch] * inv_std[ch];
        for s in 0..n {
            let off = s * c * plane + ch * plane;
            for i in 0..plane {
                let xv = input.data()[off + i];
                let gv = grad_output.data()[off + i];
                grad_in.data_mut()[off + i] = match mode {
                    Mode::Train => {
                        let xhat = (xv - mean[ch]) * inv_std[ch];
                        scale * (gv - sum_g / count - xhat * sum_gx / count)
                    }
                    Mode::Eval => scale * gv,
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_in,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

/// Moves running statistics toward the batch statistics of `input`.
///
/// The running variance tracks the unbiased batch variance.
pub fn update_running_stats(params: &mut BatchNormParams, input: &Tensor) -> Result<()> {
    params.check(input)?;
    ensure_trainable_batch(input)?;
    let (mean, var) = batch_statistics(input);
    let count = (input.batch() * input.height() * input.width()) as f64;
    let m = params.momentum;
    for ch in 0..params.channels() {
        let unbiased = var[ch] * count / (count - 1.0);
        params.running_mean[ch] = (1.0 - m) * params.running_mean[ch] + m * mean[ch];
        params.running_var[ch] = (1.0 - m) * params.running_var[ch] + m * unbiased;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_standardization() {
        let x = Tensor::from_vec([2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut p = BatchNormParams::new(1);
        p.eps = 0.0;
        let y = batchnorm2d(&x, &p, Mode::Train).unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn eval_with_unit_running_stats_is_identity() {
        let x = Tensor::from_vec([1, 2, 1, 2], vec![0.5, -2.0, 3.0, 7.0]).unwrap();
        let mut p = BatchNormParams::new(2);
        p.eps = 0.0;
        let y = batchnorm2d(&x, &p, Mode::Eval).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn single_sample_train_batch_is_rejected() {
        let x = Tensor::zeros([1, 1, 4, 4]);
        let p = BatchNormParams::new(1);
        assert!(batchnorm2d(&x, &p, Mode::Train).is_err());
        assert!(batchnorm2d(&x, &p, Mode::Eval).is_ok());
    }

    #[test]
    fn train_output_matches_gamma_beta_moments() {
        let x = Tensor::from_vec([4, 1, 1, 2], vec![0.3, 1.2, -0.7, 2.5, 0.1, 0.9, -1.1, 0.4]).unwrap();
        let mut p = BatchNormParams::new(1);
        p.gamma[0] = 2.0;
        p.beta[0] = 0.5;
        let y = batchnorm2d(&x, &p, Mode::Train).unwrap();
        let (mean, var) = batch_statistics(&y);
        assert!((mean[0] - 0.5).abs() < 1e-12);
        assert!((var[0] - 4.0).abs() < 1e-3);
    }

    #[test]
    fn running_stats_move_by_momentum() {
        let x = Tensor::from_vec([2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut p = BatchNormParams::new(1);
        update_running_stats(&mut p, &x).unwrap();
        // batch mean 2, unbiased variance 2
        assert!((p.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((p.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
    }
}
