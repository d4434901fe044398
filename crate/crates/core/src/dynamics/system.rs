use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::threshold::{soft_threshold_into, soft_threshold_scalar};
use crate::ensemble::ProblemInstance;
use crate::{Error, Result};

/// Above this dimension the Gram matrix is not formed.
pub const GRAM_CACHE_MAX_N: usize = 1000;

/// Snapshot of the network at time `t` (units of `tau`).
#[derive(Debug, Clone, PartialEq)]
pub struct LcaState {
    pub t: f64,
    /// Threshold in effect at `t`.
    pub lambda: f64,
    pub u: DVector<f64>,
    pub a: DVector<f64>,
    /// Sorted indices with `|u_k| > lambda`.
    pub active_set: Vec<usize>,
    /// `sign(u_k)` for each entry of `active_set`.
    pub signs: Vec<i8>,
}

impl LcaState {
    pub fn from_internal(t: f64, u: DVector<f64>, lambda: f64) -> Self {
        let mut a = DVector::zeros(u.len());
        soft_threshold_into(&u, lambda, &mut a);
        let mut active_set = Vec::new();
        let mut signs = Vec::new();
        for (k, &x) in u.iter().enumerate() {
            if x.abs() > lambda {
                active_set.push(k);
                signs.push(if x > 0.0 { 1 } else { -1 });
            }
        }
        LcaState { t, lambda, u, a, active_set, signs }
    }

    pub fn active_count(&self) -> usize {
        self.active_set.len()
    }
}

/// Precomputed pieces of the vector field for one instance.
///
/// `(Phi^T Phi - I) a` only involves the active columns, so each evaluation
/// costs `O(N |active|)` with the cached Gram matrix, or `O(M (N + |active|))`
/// via two rectangular products without it.
#[derive(Debug, Clone)]
pub struct LcaOperator<'a> {
    phi: &'a DMatrix<f64>,
    gram: Option<DMatrix<f64>>,
    phi_t_y: DVector<f64>,
    y: &'a DVector<f64>,
    tau: f64,
}

impl<'a> LcaOperator<'a> {
    pub fn new(instance: &'a ProblemInstance) -> Self {
        let phi = instance.phi();
        let gram = (phi.ncols() <= GRAM_CACHE_MAX_N).then(|| phi.tr_mul(phi));
        LcaOperator { phi, gram, phi_t_y: phi.tr_mul(instance.y()), y: instance.y(), tau: instance.tau() }
    }

    /// Operator that always uses the rectangular products.
    pub fn without_gram(instance: &'a ProblemInstance) -> Self {
        let phi = instance.phi();
        LcaOperator { phi, gram: None, phi_t_y: phi.tr_mul(instance.y()), y: instance.y(), tau: instance.tau() }
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        self.phi
    }

    pub fn y(&self) -> &DVector<f64> {
        self.y
    }

    pub fn phi_t_y(&self) -> &DVector<f64> {
        &self.phi_t_y
    }

    pub fn gram(&self) -> Option<&DMatrix<f64>> {
        self.gram.as_ref()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `tau * du/dt` at state `u`; `a` is scratch space for the output.
    pub(crate) fn scaled_rhs_into(&self, u: &DVector<f64>, lambda: f64, a: &mut DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n();
        // out = Phi^T y - u + a
        for k in 0..n {
            let ak = soft_threshold_scalar(u[k], lambda);
            a[k] = ak;
            out[k] = self.phi_t_y[k] - u[k] + ak;
        }
        match &self.gram {
            Some(g) => {
                for k in 0..n {
                    let ak = a[k];
                    if ak != 0.0 {
                        out.axpy(-ak, &g.column(k), 1.0);
                    }
                }
            }
            None => {
                let mut phi_a = DVector::zeros(self.phi.nrows());
                for k in 0..n {
                    let ak = a[k];
                    if ak != 0.0 {
                        phi_a.axpy(ak, &self.phi.column(k), 1.0);
                    }
                }
                out.gemv_tr(-1.0, self.phi, &phi_a, 1.0);
            }
        }
    }

    /// `du/dt` at state `u` under threshold `lambda`.
    pub fn rhs(&self, u: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let n = self.n();
        let mut a = DVector::zeros(n);
        let mut out = DVector::zeros(n);
        self.scaled_rhs_into(u, lambda, &mut a, &mut out);
        out / self.tau
    }
}

/// `du/dt = (1/tau) (-u - (Phi^T Phi - I) T_lambda(u) + Phi^T y)`.
pub fn lca_rhs(u: &DVector<f64>, lambda: f64, instance: &ProblemInstance) -> Result<DVector<f64>> {
    if u.len() != instance.n() {
        return Err(Error::invalid(alloc::format!(
            "state length {} does not match N = {}",
            u.len(),
            instance.n()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    Ok(LcaOperator::without_gram(instance).rhs(u, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ThresholdSchedule;
    use crate::ensemble::{gen_matrix, gen_sparse_signal, measure, trial_rng, AmplitudeMode, Ensemble, MeasurementMatrix, SparseSignal};
    use approx::assert_abs_diff_eq;

    fn scalar_instance(y: f64) -> ProblemInstance {
        let phi = MeasurementMatrix::explicit(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let sig = SparseSignal::from_values(DVector::from_element(1, y));
        measure(phi, sig, 0.0, ThresholdSchedule::constant(1.0).unwrap(), &mut trial_rng(0, 0)).unwrap()
    }

    #[test]
    fn rest_point_of_homogeneous_system() {
        let mut rng = trial_rng(4, 0);
        let phi = gen_matrix(6, 10, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        let sig = SparseSignal::from_values(DVector::zeros(10));
        let inst = measure(phi, sig, 0.0, ThresholdSchedule::constant(0.2).unwrap(), &mut rng).unwrap();
        let du = lca_rhs(&DVector::zeros(10), 0.2, &inst).unwrap();
        assert!(du.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_derivative_at_rest() {
        let inst = scalar_instance(2.0);
        let du = lca_rhs(&DVector::zeros(1), 1.0, &inst).unwrap();
        assert_eq!(du[0], 2.0);
        let slow = inst.with_tau(4.0).unwrap();
        assert_eq!(lca_rhs(&DVector::zeros(1), 1.0, &slow).unwrap()[0], 0.5);
    }

    #[test]
    fn gram_and_rectangular_paths_agree() {
        let mut rng = trial_rng(8, 0);
        let phi = gen_matrix(15, 30, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        let sig = gen_sparse_signal(30, 3, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        let inst = measure(phi, sig, 0.01, ThresholdSchedule::constant(0.1).unwrap(), &mut rng).unwrap();
        let u = DVector::from_fn(30, |i, _| ((i as f64) * 0.37).sin() * 0.5);
        let fast = LcaOperator::new(&inst).rhs(&u, 0.1);
        let slow = lca_rhs(&u, 0.1, &inst).unwrap();
        // direct formula with the dense Gram matrix
        let a = u.map(|x| soft_threshold_scalar(x, 0.1));
        let g = inst.phi().tr_mul(inst.phi()) - DMatrix::identity(30, 30);
        let direct = -&u - g * &a + inst.phi().tr_mul(inst.y());
        for i in 0..30 {
            assert_abs_diff_eq!(fast[i], direct[i], epsilon = 1e-13);
            assert_abs_diff_eq!(slow[i], direct[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn state_snapshot_is_consistent() {
        let u = DVector::from_vec(vec![0.5, -2.0, 1.0, 1.5]);
        let s = LcaState::from_internal(0.0, u, 1.0);
        assert_eq!(s.active_set, vec![1, 3]);
        assert_eq!(s.signs, vec![-1, 1]);
        assert_eq!(s.a.as_slice(), &[0.0, -1.0, 0.0, 0.5]);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let inst = scalar_instance(2.0);
        assert!(lca_rhs(&DVector::zeros(2), 1.0, &inst).is_err());
    }
}
