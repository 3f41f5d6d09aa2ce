use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Coupled L2: `weight_decay * theta` is added to the gradient.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. One moment pair per parameter blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "adam: {} parameter blobs but {} gradient blobs",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape(format!(
                    "adam: blob {i} has {} parameters but {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != params.len()
            || self
                .first_moment
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::shape("adam: parameter layout changed between steps"));
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[b];
            let v = &mut self.second_moment[b];
            for i in 0..p.len() {
                let grad = g[i] + weight_decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -7.0, 1e-3];
        adam.update(&mut [&mut p], &[&g]).unwrap();
        let moved = [1.0 - p[0], -2.0 - p[1], 0.5 - p[2]];
        for (d, gi) in moved.iter().zip(&g) {
            assert!((d - 1e-3 * gi.signum()).abs() < 1e-7, "{d}");
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn weight_decay_acts_as_gradient() {
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut decayed = Adam::new(cfg);
        let mut p = vec![2.0];
        decayed.update(&mut [&mut p], &[&[0.0]]).unwrap();

        let mut plain = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..cfg
        });
        let mut q = vec![2.0];
        plain.update(&mut [&mut q], &[&[0.1 * 2.0]]).unwrap();
        assert_eq!(p, q);
        assert!((decayed.first_moment()[0][0] - 0.1 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn defaults() {
        let c = AdamConfig::default();
        assert_eq!((c.learning_rate, c.weight_decay), (1e-3, 1e-5));
        assert_eq!((c.beta1, c.beta2, c.eps), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn mismatched_blobs_error() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.0; 2];
        assert!(adam.update(&mut [&mut p], &[&[1.0]]).is_err());
        assert_eq!(adam.step_count(), 0);
    }
}
