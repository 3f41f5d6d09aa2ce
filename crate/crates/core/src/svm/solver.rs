//! Sequential pairwise (SMO) solver for
//!
//! ```text
//! min  1/2 a'Qa + p'a   s.t.  y'a = delta,  0 <= a_i <= upper_i
//! ```
//!
//! with `y_i` in {-1, +1}. Each step picks the maximally KKT-violating pair
//! and solves the two-variable subproblem in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Substitute curvature when a pair's second derivative is not positive.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DualProblem {
    pub q: Matrix,
    pub p: Vec<f64>,
    pub y: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta: f64,
}

impl DualProblem {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `1/2 a'Qa + p'a`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let n = self.len();
        let mut total = 0.0;
        for i in 0..n {
            let qa: f64 = self.q.row(i).iter().zip(alpha).map(|(q, a)| q * a).sum();
            total += alpha[i] * (0.5 * qa + self.p[i]);
        }
        total
    }

    /// Largest violation of the box and equality constraints.
    pub fn infeasibility(&self, alpha: &[f64]) -> f64 {
        let eq: f64 = self.y.iter().zip(alpha).map(|(y, a)| y * a).sum::<f64>() - self.delta;
        alpha
            .iter()
            .zip(&self.upper)
            .map(|(&a, &u)| (-a).max(a - u).max(0.0))
            .fold(eq.abs(), f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop once the maximal violation `m - M` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the objective after every update (for diagnostics and tests).
    pub record_objective: bool,
    /// Re-solve the stationarity system on the free set after SMO.
    pub refine: bool,
    /// With `refine`, SMO resumes from the refined point until the
    /// violation is below this, then refines again.
    pub polish_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 1_000_000,
            record_objective: false,
            refine: true,
            polish_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Offset read off the gradient at free variables.
    pub rho: f64,
    /// `1/2 a'Qa + p'a` at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each update when requested; starts with the initial point.
    pub objective_trace: Vec<f64>,
    /// `Qa + p` at the solution.
    pub gradient: Vec<f64>,
    /// How many times the active-set refinement replaced the SMO iterate.
    pub refinements: usize,
}

fn objective_from_gradient(alpha: &[f64], grad: &[f64], p: &[f64]) -> f64 {
    alpha.iter().zip(grad).zip(p).map(|((a, g), p)| 0.5 * a * (g + p)).sum()
}

/// Runs SMO from the feasible starting point `alpha`.
pub fn solve(problem: &DualProblem, mut alpha: Vec<f64>, options: &SolverOptions) -> Result<DualSolution> {
    let n = problem.len();
    if problem.q.shape() != (n, n) || problem.y.len() != n || problem.upper.len() != n || alpha.len() != n {
        return Err(Error::shape("inconsistent dual problem dimensions"));
    }
    if problem.infeasibility(&alpha) > 1e-9 {
        return Err(Error::Numerical("solver started from an infeasible point".into()));
    }
    let mut grad: Vec<f64> = (0..n)
        .map(|i| problem.p[i] + problem.q.row(i).iter().zip(&alpha).map(|(q, a)| q * a).sum::<f64>())
        .collect();

    let record = options.record_objective;
    let mut trace = Vec::new();
    if record {
        trace.push(objective_from_gradient(&alpha, &grad, &problem.p));
    }
    let (mut iterations, mut converged) = smo(
        problem,
        &mut alpha,
        &mut grad,
        options.tol,
        options.max_iter,
        record,
        &mut trace,
    );
    if !converged {
        log::warn!(
            "SMO stopped after {iterations} updates without reaching tolerance {}",
            options.tol
        );
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient in SMO".into()));
    }

    let mut refinements = 0;
    if options.refine {
        // a loose SMO stop can leave the wrong variables free; polishing
        // corrects the free set before the exact re-solve
        for _ in 0..MAX_POLISH_ROUNDS {
            if refine(problem, &mut alpha, &mut grad) {
                refinements += 1;
                if record {
                    trace.push(objective_from_gradient(&alpha, &grad, &problem.p));
                }
            }
            if violation(problem, &alpha, &grad) < options.polish_tol {
                break;
            }
            let budget = options.max_iter.saturating_sub(iterations);
            let (more, done) = smo(
                problem,
                &mut alpha,
                &mut grad,
                options.polish_tol,
                budget,
                record,
                &mut trace,
            );
            iterations += more;
            converged &= done;
        }
    }
    let rho = offset(problem, &alpha, &grad, OffsetRule::Mean);
    Ok(DualSolution {
        objective: objective_from_gradient(&alpha, &grad, &problem.p),
        alpha,
        rho,
        iterations,
        converged,
        objective_trace: trace,
        gradient: grad,
        refinements,
    })
}

const MAX_POLISH_ROUNDS: usize = 3;

/// Maximal violating-pair gap `m - M`; 0 when no pair exists.
fn violation(problem: &DualProblem, alpha: &[f64], grad: &[f64]) -> f64 {
    let (y, c) = (&problem.y, &problem.upper);
    let (mut m, mut big_m) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let (lower, upper) = (alpha[t] <= 0.0, alpha[t] >= c[t]);
        let up = if y[t] > 0.0 { !upper } else { !lower };
        let low = if y[t] > 0.0 { !lower } else { !upper };
        if up {
            m = m.max(v);
        }
        if low {
            big_m = big_m.min(v);
        }
    }
    if m.is_finite() && big_m.is_finite() {
        (m - big_m).max(0.0)
    } else {
        0.0
    }
}

/// SMO updates until the violation drops below `tol` or `max_iter` updates
/// were made. Returns the update count and whether `tol` was reached.
fn smo(
    problem: &DualProblem,
    alpha: &mut [f64],
    grad: &mut [f64],
    tol: f64,
    max_iter: usize,
    record: bool,
    trace: &mut Vec<f64>,
) -> (usize, bool) {
    let n = alpha.len();
    let (q, y, c) = (&problem.q, &problem.y, &problem.upper);
    let at_upper = |a: f64, i: usize| a >= c[i];
    let at_lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i maximizes -y G over the "up" set, j minimizes it over the "low" set
        let (mut i, mut m) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut big_m) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 {
                !at_upper(alpha[t], t)
            } else {
                !at_lower(alpha[t])
            };
            let low = if y[t] > 0.0 {
                !at_lower(alpha[t])
            } else {
                !at_upper(alpha[t], t)
            };
            if up && v > m {
                m = v;
                i = t;
            }
            if low && v < big_m {
                big_m = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || m - big_m < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (qi, qj) = (q.row(i), q.row(j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (c[i], c[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let mut quad = qi[i] + qj[j] + 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let step = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += step;
            aj += step;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let mut quad = qi[i] + qj[j] - 2.0 * qi[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let step = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= step;
            aj += step;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
        if record {
            trace.push(objective_from_gradient(&alpha, &grad, &problem.p));
        }
    }
    (iterations, converged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetRule {
    /// Average of `y G` over free variables.
    Mean,
    /// Smallest `y G` over free variables.
    MinFree,
}

/// Offset `rho` from the gradient; without free variables, the midpoint of
/// the interval the bound variables allow.
pub fn offset(problem: &DualProblem, alpha: &[f64], grad: &[f64], rule: OffsetRule) -> f64 {
    let (y, c) = (&problem.y, &problem.upper);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_min, mut free_count) = (0.0, f64::INFINITY, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_min = free_min.min(yg);
            free_count += 1;
        }
    }
    match (free_count, rule) {
        (0, _) => (ub + lb) / 2.0,
        (_, OffsetRule::Mean) => free_sum / free_count as f64,
        (_, OffsetRule::MinFree) => free_min,
    }
}

/// Holds bound variables fixed and solves the equality-constrained
/// stationarity system on the free ones exactly (SVD least squares, so a
/// singular `Q` is fine). The result replaces `alpha` only if it stays in the
/// box and does not raise the objective.
fn refine(problem: &DualProblem, alpha: &mut [f64], grad: &mut [f64]) -> bool {
    let n = alpha.len();
    let free: Vec<usize> = (0..n)
        .filter(|&i| alpha[i] > 0.0 && alpha[i] < problem.upper[i])
        .collect();
    if free.is_empty() {
        return false;
    }
    let k = free.len();
    let is_free = {
        let mut v = vec![false; n];
        free.iter().for_each(|&i| v[i] = true);
        v
    };
    let mut lhs = nalgebra::DMatrix::zeros(k + 1, k + 1);
    let mut rhs = nalgebra::DVector::zeros(k + 1);
    let mut fixed_sum = 0.0;
    for t in (0..n).filter(|&t| !is_free[t]) {
        fixed_sum += problem.y[t] * alpha[t];
    }
    for (r, &i) in free.iter().enumerate() {
        let qi = problem.q.row(i);
        for (s, &j) in free.iter().enumerate() {
            lhs[(r, s)] = qi[j];
        }
        lhs[(r, k)] = problem.y[i];
        lhs[(k, r)] = problem.y[i];
        let bound_part: f64 = (0..n).filter(|&t| !is_free[t]).map(|t| qi[t] * alpha[t]).sum();
        rhs[r] = -problem.p[i] - bound_part;
    }
    rhs[k] = problem.delta - fixed_sum;
    let svd = lhs.clone().svd(true, true);
    let Ok(sol) = svd.solve(&rhs, 1e-12 * svd.singular_values.max()) else {
        return false;
    };
    if (&lhs * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
        return false;
    }
    if free
        .iter()
        .enumerate()
        .any(|(r, &i)| !(sol[r] >= 0.0 && sol[r] <= problem.upper[i]))
    {
        return false;
    }
    let mut candidate = alpha.to_vec();
    for (r, &i) in free.iter().enumerate() {
        candidate[i] = sol[r];
    }
    if problem.infeasibility(&candidate) > 1e-10 {
        return false;
    }
    let new_grad: Vec<f64> = (0..n)
        .map(|i| problem.p[i] + problem.q.row(i).iter().zip(&candidate).map(|(q, a)| q * a).sum::<f64>())
        .collect();
    let old = objective_from_gradient(alpha, grad, &problem.p);
    let new = objective_from_gradient(&candidate, &new_grad, &problem.p);
    if !(new <= old) {
        return false;
    }
    alpha.copy_from_slice(&candidate);
    grad.copy_from_slice(&new_grad);
    true
}
