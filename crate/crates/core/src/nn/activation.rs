use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Tanh,
}

pub fn activation(input: &Tensor, kind: ActivationKind) -> Tensor {
    match kind {
        ActivationKind::Relu => input.map(|v| v.max(0.0)),
        ActivationKind::Tanh => input.map(f64::tanh),
    }
}

/// ReLU's derivative at exactly 0 is taken as 0.
pub fn activation_backward(input: &Tensor, kind: ActivationKind, grad_output: &Tensor) -> Result<Tensor> {
    input.ensure_same_shape(grad_output, "activation backward")?;
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| match kind {
            ActivationKind::Relu => {
                if x > 0.0 {
                    g
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                g * (1.0 - t * t)
            }
        })
        .collect();
    Tensor::from_vec(input.shape(), data)
}
