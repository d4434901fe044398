//! Closed-form pieces of the affine ODE that governs a fixed active set.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, SINGULAR_TOL};
use crate::{Error, Result};

/// `(1 - exp(-mu t)) / mu`, continuous at `mu = 0` where it equals `t`.
#[inline]
pub(crate) fn relaxation_factor(mu: f64, t: f64) -> f64 {
    if mu == 0.0 {
        t
    } else {
        -libm::expm1(-mu * t) / mu
    }
}

/// `(I - exp(-A t)) A^{-1}` for symmetric positive semidefinite `A`.
///
/// Eigenvalues at or below `SINGULAR_TOL` times the largest magnitude are
/// treated as zero, for which the diagonal factor takes its limit `t`.
pub fn phi_fun(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("phi_fun needs a square matrix"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("phi_fun needs t >= 0"));
    }
    let eig = linalg::symmetric_eigen(a.clone(), t)?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let factors = eig.eigenvalues.map(|mu| {
        let mu = if mu.abs() <= SINGULAR_TOL * scale { 0.0 } else { mu };
        relaxation_factor(mu, t)
    });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&factors) * v.transpose())
}

/// Equilibrium of the active-set dynamics: solves
/// `Phi_G^T Phi_G a = Phi_G^T y - lambda z` and returns it as a length-N
/// vector supported on `active_set`.
pub fn steady_state_candidate(
    phi: &DMatrix<f64>,
    active_set: &[usize],
    signs: &[f64],
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    if active_set.len() != signs.len() {
        return Err(Error::invalid("active set and sign vector differ in length"));
    }
    if y.len() != phi.nrows() {
        return Err(Error::invalid("measurement length does not match the matrix"));
    }
    let mut full = DVector::zeros(phi.ncols());
    if active_set.is_empty() {
        return Ok(full);
    }
    let local = solve_restricted(phi, active_set, signs, y, lambda)?;
    for (i, &k) in active_set.iter().enumerate() {
        full[k] = local[i];
    }
    Ok(full)
}

fn solve_restricted(
    phi: &DMatrix<f64>,
    active_set: &[usize],
    signs: &[f64],
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    let sub = linalg::select_columns(phi, active_set);
    let a = sub.tr_mul(&sub);
    let (lo, hi) = linalg::symmetric_extremes(&a);
    if !(lo > SINGULAR_TOL * hi) {
        return Err(Error::SingularSystem { condition: lo / hi });
    }
    let rhs = sub.tr_mul(y) - DVector::from_column_slice(signs) * lambda;
    let chol = a.cholesky().ok_or(Error::SingularSystem { condition: lo / hi })?;
    Ok(chol.solve(&rhs))
}

/// Exact fixed point `(a*, u*)` consistent with a given support and sign
/// pattern, or `None` when the pattern is not self-consistent (a sign flips,
/// or an off-support correlation exceeds the threshold by more than `tol`).
pub fn fixed_point_for_support(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    active_set: &[usize],
    signs: &[f64],
    tol: f64,
) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    let a = steady_state_candidate(phi, active_set, signs, y, lambda)?;
    for (i, &k) in active_set.iter().enumerate() {
        if a[k] * signs[i] <= 0.0 {
            return Ok(None);
        }
    }
    let residual = y - phi * &a;
    let mut u = phi.tr_mul(&residual);
    let mut on = alloc::vec![false; phi.ncols()];
    for (i, &k) in active_set.iter().enumerate() {
        u[k] = a[k] + lambda * signs[i];
        on[k] = true;
    }
    for (k, &is_on) in on.iter().enumerate() {
        if !is_on && u[k].abs() > lambda + tol {
            return Ok(None);
        }
    }
    Ok(Some((a, u)))
}

/// Support and signs of an output vector.
pub fn support_and_signs(a: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    a.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| (k, linalg::sign(*v)))
        .unzip()
}
