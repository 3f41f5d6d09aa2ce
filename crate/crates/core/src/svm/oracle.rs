//! Exhaustive active-set solver for tiny dual problems, used to check SMO.
//!
//! Every variable is tried at its lower bound, its upper bound, or free.
//! For each pattern the equality-constrained stationarity system on the free
//! set is solved by SVD; feasible candidates are kept and the best objective
//! wins. Since the problem is convex, the optimum is among the candidates.

use nalgebra::{DMatrix, DVector};

use super::solver::DualProblem;
use crate::error::{Error, Result};

pub const ORACLE_MAX_N: usize = 8;

const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub alpha: Vec<f64>,
    /// `1/2 a'Qa + p'a` at the optimum.
    pub objective: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Lower,
    Upper,
    Free,
}

pub fn qp_oracle(problem: &DualProblem) -> Result<OracleSolution> {
    let n = problem.len();
    if n > ORACLE_MAX_N {
        return Err(Error::config(format!(
            "exhaustive oracle refuses n = {n} (limit {ORACLE_MAX_N})"
        )));
    }
    let mut best: Option<OracleSolution> = None;
    let mut pattern = vec![State::Lower; n];
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        for s in pattern.iter_mut() {
            *s = [State::Lower, State::Upper, State::Free][c % 3];
            c /= 3;
        }
        if let Some(alpha) = candidate(problem, &pattern) {
            let objective = problem.objective(&alpha);
            if best.as_ref().is_none_or(|b| objective < b.objective) {
                best = Some(OracleSolution { alpha, objective });
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("dual problem has no feasible point".into()))
}

fn candidate(problem: &DualProblem, pattern: &[State]) -> Option<Vec<f64>> {
    let n = problem.len();
    let mut alpha = vec![0.0; n];
    for (i, s) in pattern.iter().enumerate() {
        if *s == State::Upper {
            alpha[i] = problem.upper[i];
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == State::Free).collect();
    let fixed_sum: f64 = (0..n).map(|i| problem.y[i] * alpha[i]).sum();
    if free.is_empty() {
        return ((fixed_sum - problem.delta).abs() <= FEAS_TOL).then_some(alpha);
    }
    // [Q_FF y_F; y_F' 0] [a_F; lambda] = [-(p_F + Q_FB a_B); delta - y_B' a_B]
    let k = free.len();
    let mut lhs = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            lhs[(r, s)] = problem.q[(i, j)];
        }
        lhs[(r, k)] = problem.y[i];
        lhs[(k, r)] = problem.y[i];
        rhs[r] = -problem.p[i] - (0..n).map(|j| problem.q[(i, j)] * alpha[j]).sum::<f64>();
    }
    rhs[k] = problem.delta - fixed_sum;
    let svd = lhs.clone().svd(true, true);
    let sol = svd.solve(&rhs, 1e-10).ok()?;
    let residual = (&lhs * &sol - &rhs).amax();
    if residual > 1e-8 * (1.0 + rhs.amax()) {
        return None;
    }
    for (r, &i) in free.iter().enumerate() {
        let a = sol[r];
        if a < -FEAS_TOL || a > problem.upper[i] + FEAS_TOL {
            return None;
        }
        alpha[i] = a.clamp(0.0, problem.upper[i]);
    }
    // clamping may nudge the equality; reject if it moved materially
    (problem.infeasibility(&alpha) <= 1e-8).then_some(alpha)
}
