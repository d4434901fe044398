//! Reference solver and optimality certificate for
//! `min_a 0.5 ||y - Phi a||^2 + lambda ||a||_1`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::soft_threshold_scalar;
use crate::linalg::norm_inf;
use crate::{Error, Result};

/// `0.5 ||y - Phi a||^2 + lambda ||a||_1`.
pub fn objective(a: &DVector<f64>, phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - phi * a;
    0.5 * r.norm_squared() + lambda * a.lp_norm(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimalityCheck {
    pub holds: bool,
    /// Largest violation over both conditions (0 when all are met exactly).
    pub max_violation: f64,
}

/// KKT conditions of the l1 problem. On the support of `a`:
/// `Phi_j^T (y - Phi a) = lambda sign(a_j)`; off it: `|Phi_j^T (y - Phi a)| <= lambda`.
pub fn check_optimality(
    a: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
) -> OptimalityCheck {
    let corr = phi.tr_mul(&(y - phi * a));
    let mut worst = 0.0f64;
    let mut holds = true;
    for (&aj, &cj) in a.iter().zip(corr.iter()) {
        if aj != 0.0 {
            let v = (cj - lambda * aj.signum()).abs();
            worst = worst.max(v);
            holds &= v <= tol;
        } else {
            let v = (cj.abs() - lambda).max(0.0);
            worst = worst.max(v);
            holds &= cj.abs() <= lambda + tol;
        }
    }
    OptimalityCheck { holds, max_violation: worst }
}

/// Largest eigenvalue of `Phi^T Phi` by power iteration.
pub fn lipschitz_constant(phi: &DMatrix<f64>) -> f64 {
    let n = phi.ncols();
    if n == 0 || phi.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / libm::sqrt(n as f64));
    let mut estimate = 0.0;
    for _ in 0..100 {
        let w = phi.tr_mul(&(phi * &v));
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let done = (next - estimate).abs() <= 1e-10 * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveResult {
    #[cfg_attr(
        feature = "serde",
        serde(serialize_with = "crate::serde_util::serialize_dvector", deserialize_with = "crate::serde_util::deserialize_dvector")
    )]
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub final_objective: f64,
    /// Largest KKT violation at the returned point.
    pub kkt_residual: f64,
    pub status: SolveStatus,
    /// Step size actually used.
    pub step: f64,
    /// Monotone descent held on every iteration (up to rounding).
    pub monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaOptions {
    /// Defaults to `1 / (1.01 L)`.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Stop when `||a_{k+1} - a_k||_inf <= tol * step`.
    pub tol: f64,
}

impl Default for IstaOptions {
    fn default() -> Self {
        IstaOptions { step: None, max_iters: 200_000, tol: 1e-10 }
    }
}

/// Proximal-gradient iteration `a <- T_{lambda step}(a - step Phi^T (Phi a - y))`
/// from `a = 0`.
pub fn ista_solve(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &IstaOptions) -> Result<SolveResult> {
    if y.len() != phi.nrows() {
        return Err(Error::invalid("measurement length does not match the matrix"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let lip = lipschitz_constant(phi);
    let step = match opts.step {
        Some(s) if !(s > 0.0 && s.is_finite()) => return Err(Error::invalid("step must be positive")),
        Some(s) => s,
        None if lip == 0.0 => 1.0,
        None => 1.0 / (1.01 * lip),
    };
    let n = phi.ncols();
    let phi_t_y = phi.tr_mul(y);
    let gram = phi.tr_mul(phi);
    let mut a = DVector::zeros(n);
    let mut next = DVector::zeros(n);
    let mut obj = objective(&a, phi, y, lambda);
    let mut monotone = true;
    let mut status = SolveStatus::NotConverged;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let grad = &gram * &a - &phi_t_y;
        for k in 0..n {
            next[k] = soft_threshold_scalar(a[k] - step * grad[k], lambda * step);
        }
        let change = norm_inf(&(&next - &a));
        core::mem::swap(&mut a, &mut next);
        let new_obj = objective(&a, phi, y, lambda);
        if new_obj > obj + 1e-12 * (1.0 + obj.abs()) {
            monotone = false;
        }
        obj = new_obj;
        if change <= opts.tol * step {
            status = SolveStatus::Converged;
            break;
        }
    }
    let kkt = check_optimality(&a, phi, y, lambda, 0.0);
    Ok(SolveResult { solution: a, iterations, final_objective: obj, kkt_residual: kkt.max_violation, status, step, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn objective_values() {
        let phi = DMatrix::<f64>::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        assert_eq!(objective(&DVector::zeros(3), &phi, &y, 0.7), 4.5);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(objective(&e1, &phi, &DVector::zeros(3), 1.0), 1.5);
    }

    #[test]
    fn orthonormal_problem_is_solved_in_one_step() {
        let phi = DMatrix::<f64>::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -0.2, 0.5]);
        let res = ista_solve(&phi, &y, 0.3, &IstaOptions { step: Some(1.0), ..Default::default() }).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(res.iterations <= 2);
        assert_abs_diff_eq!(res.solution[0], 0.7, epsilon = 1e-15);
        assert_eq!(res.solution[1], 0.0);
        assert_abs_diff_eq!(res.solution[2], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let phi = DMatrix::from_row_slice(2, 3, &[0.6, 0.8, 0.0, 0.8, -0.6, 1.0]);
        let y = DVector::from_vec(vec![0.3, -0.1]);
        let lam = norm_inf(&phi.tr_mul(&y));
        let res = ista_solve(&phi, &y, lam, &IstaOptions::default()).unwrap();
        assert!(res.solution.iter().all(|v| *v == 0.0));
        assert!(check_optimality(&res.solution, &phi, &y, lam, 0.0).holds);
    }

    #[test]
    fn scalar_kkt() {
        let phi = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 2.0);
        let c = check_optimality(&DVector::from_element(1, 1.0), &phi, &y, 1.0, 0.0);
        assert!(c.holds);
        assert_eq!(c.max_violation, 0.0);
        assert!(!check_optimality(&DVector::from_element(1, 0.5), &phi, &y, 1.0, 1e-3).holds);
    }

    #[test]
    fn power_iteration_matches_eigenvalue() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0]);
        let exact = phi.tr_mul(&phi).symmetric_eigenvalues().max();
        assert_abs_diff_eq!(lipschitz_constant(&phi), exact, epsilon = 1e-8);
    }
}
