use super::Tensor;
use crate::error::Result;

/// Mean squared error over all elements, with its gradient
/// `2 (prediction - target) / N` with respect to the prediction.
pub fn mse_loss(prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    prediction.ensure_same_shape(target, "mse loss")?;
    let n = prediction.len().max(1) as f64;
    let mut sum = 0.0;
    let grad = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, Tensor::from_vec(prediction.shape(), grad)?))
}

/// Mean squared error of each sample separately.
pub fn per_sample_mse(prediction: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    prediction.ensure_same_shape(target, "per-sample mse")?;
    let len = prediction.sample_len().max(1) as f64;
    Ok((0..prediction.batch())
        .map(|s| {
            prediction
                .sample(s)
                .iter()
                .zip(target.sample(s))
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / len
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tensors_have_zero_loss() {
        let x = Tensor::from_vec([1, 1, 1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(mse_loss(&x, &x).unwrap().0, 0.0);
    }

    #[test]
    fn loss_and_gradient_of_unit_offset() {
        let p = Tensor::zeros([1, 1, 1, 2]);
        let t = Tensor::filled([1, 1, 1, 2], 1.0);
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[-1.0, -1.0]);
    }

    #[test]
    fn shape_mismatch_errors() {
        assert!(mse_loss(&Tensor::zeros([1, 1, 1, 2]), &Tensor::zeros([1, 1, 2, 1])).is_err());
    }
}
