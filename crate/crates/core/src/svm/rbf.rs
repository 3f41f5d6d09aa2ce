//! Classical baseline kernel `exp(-gamma |x - x'|^2)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::qkernel::GramMatrix;

/// `1 / (d * mean per-feature variance)`, population variance per column.
/// Falls back to `1/d` when every feature is constant.
pub fn default_gamma(features: &Matrix) -> Result<f64> {
    let (n, d) = features.shape();
    if n == 0 || d == 0 {
        return Err(Error::data("cannot derive gamma from an empty feature table"));
    }
    let mut total_var = 0.0;
    for j in 0..d {
        let mean = features.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64;
        total_var += features.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
    }
    let mean_var = total_var / d as f64;
    Ok(if mean_var > 0.0 {
        1.0 / (d as f64 * mean_var)
    } else {
        1.0 / d as f64
    })
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

/// Same layout as the quantum Gram: square with unit diagonal, or the
/// rectangular cross-kernel against `b`.
pub fn rbf_gram(a: &Matrix, b: Option<&Matrix>, gamma: f64) -> Result<GramMatrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config(format!("RBF gamma must be positive, got {gamma}")));
    }
    let other = b.unwrap_or(a);
    if other.cols() != a.cols() {
        return Err(Error::shape(format!(
            "RBF kernel needs equal widths, got {} and {}",
            a.cols(),
            other.cols()
        )));
    }
    let (n, m) = (a.rows(), other.rows());
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..m)
                .map(|j| {
                    if b.is_none() && i == j {
                        1.0
                    } else if b.is_none() && j < i {
                        f64::NAN // filled from the upper triangle below
                    } else {
                        rbf(a.row(i), other.row(j), gamma)
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut values = Matrix::from_vec(n, m, data)?;
    if b.is_none() {
        for i in 0..n {
            for j in 0..i {
                values[(i, j)] = values[(j, i)];
            }
        }
    }
    Ok(GramMatrix {
        row_ids: (0..n).collect(),
        col_ids: (0..m).collect(),
        values,
    })
}
