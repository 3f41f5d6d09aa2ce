//! Class-weighted two-class SVM and nu-one-class SVM on precomputed kernels.
//!
//! Decision functions: `f(x) = sum_j a_j y_j K(x_j, x) - rho` for the
//! two-class model and `f(x) = sum_j a_j K(x_j, x) - rho` for the one-class
//! model. A sample is normal (+1) iff `f(x) >= 0`.

mod model_io;
mod oracle;
mod rbf;
mod solver;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::qkernel::GramMatrix;

pub use model_io::{load_model, read_model, save_model, write_model};
pub use oracle::{qp_oracle, OracleSolution, ORACLE_MAX_N};
pub use rbf::{default_gamma, rbf_gram};
pub use solver::{offset, solve, DualProblem, DualSolution, OffsetRule, SolverOptions};

/// Gram matrices more negative than this in their smallest eigenvalue
/// trigger a warning.
pub const PSD_TOL: f64 = 1e-8;

/// Multipliers on the box constraint `C` per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// Weight of the anomaly class (-1).
    pub negative: f64,
    /// Weight of the normal class (+1).
    pub positive: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            negative: 1.0,
            positive: 1.0,
        }
    }
}

impl ClassWeights {
    pub fn for_label(&self, label: i8) -> f64 {
        if label < 0 {
            self.negative
        } else {
            self.positive
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub sample_ids: Vec<usize>,
    pub labels: Vec<i8>,
    /// Raw multipliers `a_i`, with `0 <= a_i <= C w_{y_i}`.
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub c: f64,
    pub class_weights: ClassWeights,
    /// Dual objective in maximization form, `sum a - 1/2 a'Qa`.
    pub objective: f64,
    pub iterations: usize,
}

impl SvmModel {
    /// `a_i y_i` for every training sample.
    pub fn dual_coefficients(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| a * f64::from(y))
            .collect()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmModel {
    pub sample_ids: Vec<usize>,
    /// `a_i` in `[0, 1/(nu n)]`, summing to 1.
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub nu: f64,
    /// Dual objective in maximization form, `-1/2 a'Ka`.
    pub objective: f64,
    pub iterations: usize,
}

impl OcsvmModel {
    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Svm(SvmModel),
    Ocsvm(OcsvmModel),
}

impl Model {
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            Model::Svm(m) => m.dual_coefficients(),
            Model::Ocsvm(m) => m.alpha.clone(),
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            Model::Svm(m) => m.rho,
            Model::Ocsvm(m) => m.rho,
        }
    }

    pub fn sample_ids(&self) -> &[usize] {
        match self {
            Model::Svm(m) => &m.sample_ids,
            Model::Ocsvm(m) => &m.sample_ids,
        }
    }
}

impl From<SvmModel> for Model {
    fn from(m: SvmModel) -> Self {
        Model::Svm(m)
    }
}

impl From<OcsvmModel> for Model {
    fn from(m: OcsvmModel) -> Self {
        Model::Ocsvm(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub labels: Vec<i8>,
}

/// Boundary rule: a score of exactly 0 is normal.
pub fn label_for(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

fn check_gram(gram: &GramMatrix) -> Result<()> {
    let (r, c) = gram.values.shape();
    if r != c || r == 0 {
        return Err(Error::shape(format!(
            "training Gram must be square and non-empty, got {r}x{c}"
        )));
    }
    if !gram.values.is_symmetric(1e-9) {
        return Err(Error::Numerical("training Gram is not symmetric".into()));
    }
    if gram.values.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("training Gram has non-finite entries".into()));
    }
    let min_eig = gram.values.min_eigenvalue()?;
    if min_eig < -PSD_TOL {
        log::warn!("Gram matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}); proceeding");
    }
    Ok(())
}

/// Dual of the weighted soft-margin SVM: `Q = yy'K`, `p = -1`, `y'a = 0`,
/// `0 <= a_i <= C w_{y_i}`.
pub fn csvm_problem(gram: &Matrix, labels: &[i8], c: f64, weights: ClassWeights) -> Result<DualProblem> {
    let n = labels.len();
    if gram.shape() != (n, n) {
        return Err(Error::shape(format!(
            "{n} labels for a {}x{} Gram",
            gram.rows(),
            gram.cols()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::data(format!("label {bad} is not +1 or -1")));
    }
    if !(c > 0.0) || !(weights.negative > 0.0) || !(weights.positive > 0.0) {
        return Err(Error::config("C and class weights must be positive"));
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut q = gram.clone();
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] *= y[i] * y[j];
        }
    }
    Ok(DualProblem {
        q,
        p: vec![-1.0; n],
        upper: labels.iter().map(|&l| c * weights.for_label(l)).collect(),
        y,
        delta: 0.0,
    })
}

/// Dual of the nu-one-class SVM: `Q = K`, `p = 0`, `sum a = 1`,
/// `0 <= a_i <= 1/(nu n)`.
pub fn ocsvm_problem(gram: &Matrix, nu: f64) -> Result<DualProblem> {
    let n = gram.rows();
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::config(format!("nu must lie in (0, 1], got {nu}")));
    }
    if gram.cols() != n {
        return Err(Error::shape("one-class Gram must be square"));
    }
    Ok(DualProblem {
        q: gram.clone(),
        p: vec![0.0; n],
        y: vec![1.0; n],
        upper: vec![1.0 / (nu * n as f64); n],
        delta: 1.0,
    })
}

pub fn fit_csvm(
    gram: &GramMatrix,
    labels: &[i8],
    c: f64,
    weights: ClassWeights,
    options: &SolverOptions,
) -> Result<SvmModel> {
    let has = |l: i8| labels.contains(&l);
    if !(has(1) && has(-1)) {
        return Err(Error::data(
            "two-class SVM needs both labels present; use the one-class SVM for single-class data",
        ));
    }
    let problem = csvm_problem(&gram.values, labels, c, weights)?;
    check_gram(gram)?;
    let sol = solve(&problem, vec![0.0; labels.len()], options)?;
    Ok(SvmModel {
        sample_ids: gram.row_ids.clone(),
        labels: labels.to_vec(),
        alpha: sol.alpha,
        rho: sol.rho,
        c,
        class_weights: weights,
        objective: -sol.objective,
        iterations: sol.iterations,
    })
}

/// Result of [`fit_ocsvm_traced`]: the model plus the raw solver output.
pub struct OcsvmFit {
    pub model: OcsvmModel,
    pub solution: DualSolution,
}

/// Fits on the unscaled problem (`a_i <= 1`, `sum a = nu n`) and divides by
/// `nu n` afterwards, so the stopping tolerance applies at unit scale.
/// `rho` is the smallest margin value rather than their mean.
pub fn fit_ocsvm_traced(gram: &GramMatrix, nu: f64, options: &SolverOptions) -> Result<OcsvmFit> {
    let n = gram.values.rows();
    let scaled = ocsvm_problem(&gram.values, nu)?;
    check_gram(gram)?;
    let total = nu * n as f64;
    let problem = DualProblem {
        upper: vec![1.0; n],
        delta: total,
        ..scaled.clone()
    };
    let whole = total.floor() as usize;
    let mut alpha = vec![0.0; n];
    alpha[..whole.min(n)].fill(1.0);
    if whole < n {
        alpha[whole] = total - whole as f64;
    }
    let solution = solve(&problem, alpha, options)?;
    let alpha: Vec<f64> = solution.alpha.iter().map(|a| a / total).collect();
    // same summation order as scoring, so training scores see this exact rho
    let grad: Vec<f64> = (0..n)
        .map(|i| gram.values.row(i).iter().zip(&alpha).map(|(k, a)| k * a).sum::<f64>())
        .collect();
    // margin vectors lie on the boundary, which the f >= 0 rule counts as
    // normal; the lowest margin value keeps roundoff from flipping them
    let rho = offset(&scaled, &alpha, &grad, OffsetRule::MinFree);
    let model = OcsvmModel {
        sample_ids: gram.row_ids.clone(),
        alpha,
        rho,
        nu,
        objective: -solution.objective / (total * total),
        iterations: solution.iterations,
    };
    Ok(OcsvmFit { model, solution })
}

pub fn fit_ocsvm(gram: &GramMatrix, nu: f64, options: &SolverOptions) -> Result<OcsvmModel> {
    Ok(fit_ocsvm_traced(gram, nu, options)?.model)
}

/// Scores test rows of `cross_gram` (test x train) in parallel.
pub fn score_and_predict(model: &Model, cross_gram: &Matrix) -> Result<ScoreReport> {
    let coef = model.coefficients();
    if cross_gram.cols() != coef.len() {
        return Err(Error::shape(format!(
            "cross Gram has {} columns, model was trained on {} samples",
            cross_gram.cols(),
            coef.len()
        )));
    }
    let rho = model.rho();
    let scores: Vec<f64> = (0..cross_gram.rows())
        .into_par_iter()
        .map(|i| cross_gram.row(i).iter().zip(&coef).map(|(k, a)| k * a).sum::<f64>() - rho)
        .collect();
    Ok(ScoreReport {
        labels: scores.iter().map(|&s| label_for(s)).collect(),
        scores,
    })
}
