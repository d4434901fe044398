//! Sparse signals, random measurement ensembles and noisy measurements.
//!
//! Every generator takes the random source explicitly. Experiments derive
//! one independent stream per trial with [`trial_rng`], so trials can run in
//! any order (or concurrently) and still reproduce bit for bit.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::ThresholdSchedule;
use crate::{Error, Result};

/// Column norms must be one to within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Random stream used for one experiment trial.
pub type TrialRng = ChaCha8Rng;

/// Stream for trial `trial` of an experiment seeded with `base_seed`.
pub fn trial_rng(base_seed: u64, trial: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(trial))
}

/// Distribution a measurement matrix was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Ensemble {
    /// i.i.d. N(0, 1) entries, columns normalized.
    GaussianUnitCol,
    /// i.i.d. +-1/sqrt(M) entries.
    BernoulliUnitCol,
    /// Columns uniform on the unit sphere.
    UniformSphere,
    /// Supplied by the caller.
    Explicit,
}

impl Ensemble {
    pub fn tag(self) -> &'static str {
        match self {
            Ensemble::GaussianUnitCol => "gaussian-unit-col",
            Ensemble::BernoulliUnitCol => "bernoulli-unit-col",
            Ensemble::UniformSphere => "uniform-sphere",
            Ensemble::Explicit => "explicit",
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-unit-col" | "gaussian" => Ok(Ensemble::GaussianUnitCol),
            "bernoulli-unit-col" | "bernoulli" => Ok(Ensemble::BernoulliUnitCol),
            "uniform-sphere" => Ok(Ensemble::UniformSphere),
            "explicit" => Ok(Ensemble::Explicit),
            other => Err(Error::invalid(alloc::format!("unknown ensemble tag `{other}`"))),
        }
    }
}

/// How the nonzero amplitudes of a sparse signal are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AmplitudeMode {
    /// Every nonzero is +-1/sqrt(S) with a uniform random sign.
    EqualMagnitude,
    /// Nonzeros are i.i.d. N(0, 1).
    GaussianAmplitudes,
}

/// Ground-truth signal with `s` nonzeros out of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: DVector<f64>,
    support: Vec<usize>,
}

impl SparseSignal {
    /// Wraps an arbitrary vector; the support is its set of nonzero entries.
    pub fn from_values(values: DVector<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        SparseSignal { values, support }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Sorted indices of the nonzero entries.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// Draws a signal with a uniformly random support of size `s`.
pub fn gen_sparse_signal<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    mode: AmplitudeMode,
    unit_norm: bool,
    rng: &mut R,
) -> Result<SparseSignal> {
    if s == 0 || s > n {
        return Err(Error::invalid(alloc::format!(
            "sparsity must satisfy 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    let mut support = index::sample(rng, n, s).into_vec();
    support.sort_unstable();

    let mut values = DVector::zeros(n);
    match mode {
        AmplitudeMode::EqualMagnitude => {
            let magnitude = 1.0 / libm::sqrt(s as f64);
            for &i in &support {
                values[i] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
            }
        }
        AmplitudeMode::GaussianAmplitudes => {
            for &i in &support {
                let mut v: f64 = rng.sample(StandardNormal);
                while v == 0.0 {
                    v = rng.sample(StandardNormal);
                }
                values[i] = v;
            }
            if unit_norm {
                let norm = values.norm();
                values /= norm;
            }
        }
    }
    Ok(SparseSignal { values, support })
}

/// An M x N matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    entries: DMatrix<f64>,
    ensemble: Ensemble,
}

impl MeasurementMatrix {
    /// Accepts caller-supplied entries whose columns already have unit norm.
    pub fn explicit(entries: DMatrix<f64>) -> Result<Self> {
        for (j, col) in entries.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(alloc::format!(
                    "column {j} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(MeasurementMatrix { entries, ensemble: Ensemble::Explicit })
    }

    /// Normalizes the columns of caller-supplied entries.
    pub fn normalized(mut entries: DMatrix<f64>) -> Result<Self> {
        normalize_columns(&mut entries)?;
        Ok(MeasurementMatrix { entries, ensemble: Ensemble::Explicit })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }
}

fn normalize_columns(entries: &mut DMatrix<f64>) -> Result<()> {
    for (j, mut col) in entries.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid(alloc::format!("column {j} cannot be normalized")));
        }
        col /= norm;
    }
    Ok(())
}

/// Draws an `m x n` matrix from `ensemble`.
pub fn gen_matrix<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    ensemble: Ensemble,
    rng: &mut R,
) -> Result<MeasurementMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    let entries = match ensemble {
        Ensemble::GaussianUnitCol | Ensemble::UniformSphere => {
            // A normalized isotropic Gaussian vector is uniform on the sphere,
            // so both ensembles share this construction.
            let mut entries = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            normalize_columns(&mut entries)?;
            entries
        }
        Ensemble::BernoulliUnitCol => {
            let v = 1.0 / libm::sqrt(m as f64);
            DMatrix::from_fn(m, n, |_, _| if rng.random_bool(0.5) { v } else { -v })
        }
        Ensemble::Explicit => {
            return Err(Error::invalid("explicit matrices are supplied, not generated"));
        }
    };
    Ok(MeasurementMatrix { entries, ensemble })
}

/// One recovery task: `y = Phi a + eps` with its threshold and time constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    matrix: MeasurementMatrix,
    signal: SparseSignal,
    noise: DVector<f64>,
    measurement: DVector<f64>,
    threshold: ThresholdSchedule,
    tau: f64,
}

impl ProblemInstance {
    /// Assembles an instance, computing `y = Phi a + eps`.
    pub fn new(
        matrix: MeasurementMatrix,
        signal: SparseSignal,
        noise: DVector<f64>,
        threshold: ThresholdSchedule,
        tau: f64,
    ) -> Result<Self> {
        if signal.n() != matrix.n() {
            return Err(Error::invalid(alloc::format!(
                "signal length {} does not match matrix width {}",
                signal.n(),
                matrix.n()
            )));
        }
        if noise.len() != matrix.m() {
            return Err(Error::invalid(alloc::format!(
                "noise length {} does not match matrix height {}",
                noise.len(),
                matrix.m()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid("time constant must be positive"));
        }
        let measurement = synthesize(&matrix, &signal, &noise);
        Ok(ProblemInstance { matrix, signal, noise, measurement, threshold, tau })
    }

    pub fn matrix(&self) -> &MeasurementMatrix {
        &self.matrix
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.matrix.entries
    }

    pub fn signal(&self) -> &SparseSignal {
        &self.signal
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    /// The measurement vector `y`.
    pub fn y(&self) -> &DVector<f64> {
        &self.measurement
    }

    pub fn threshold(&self) -> &ThresholdSchedule {
        &self.threshold
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn m(&self) -> usize {
        self.matrix.m()
    }

    /// Same data under a different threshold schedule.
    pub fn with_threshold(mut self, threshold: ThresholdSchedule) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid("time constant must be positive"));
        }
        self.tau = tau;
        Ok(self)
    }

    /// Recomputes `Phi a + eps` from the stored parts.
    pub fn recompute_measurement(&self) -> DVector<f64> {
        synthesize(&self.matrix, &self.signal, &self.noise)
    }
}

fn synthesize(matrix: &MeasurementMatrix, signal: &SparseSignal, noise: &DVector<f64>) -> DVector<f64> {
    matrix.entries() * signal.values() + noise
}

/// Adds i.i.d. N(0, sigma^2) noise to `Phi a`.
pub fn measure<R: Rng + ?Sized>(
    matrix: MeasurementMatrix,
    signal: SparseSignal,
    sigma: f64,
    threshold: ThresholdSchedule,
    rng: &mut R,
) -> Result<ProblemInstance> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("noise standard deviation must be non-negative"));
    }
    let m = matrix.m();
    let noise = if sigma == 0.0 {
        DVector::zeros(m)
    } else {
        DVector::from_fn(m, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
    };
    ProblemInstance::new(matrix, signal, noise, threshold, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lam() -> ThresholdSchedule {
        ThresholdSchedule::constant(0.1).unwrap()
    }

    #[test]
    fn full_support_equal_magnitude_is_half() {
        let mut rng = trial_rng(3, 0);
        let sig = gen_sparse_signal(4, 4, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        for v in sig.values().iter() {
            assert_abs_diff_eq!(v.abs(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_sized_signal() {
        let mut rng = trial_rng(11, 0);
        let sig = gen_sparse_signal(400, 5, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        assert_eq!(sig.s(), 5);
        assert_eq!(sig.values().iter().filter(|v| **v != 0.0).count(), 5);
        for &i in sig.support() {
            assert_abs_diff_eq!(sig.values()[i].abs(), 0.447_213_595_499_958, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sig.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_amplitudes_are_normalized() {
        let mut rng = trial_rng(5, 2);
        let sig = gen_sparse_signal(50, 7, AmplitudeMode::GaussianAmplitudes, true, &mut rng).unwrap();
        assert_abs_diff_eq!(sig.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(sig.s(), 7);
    }

    #[test]
    fn sparsity_above_dimension_is_rejected() {
        let mut rng = trial_rng(0, 0);
        let err = gen_sparse_signal(3, 4, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn same_seed_same_signal() {
        let a = gen_sparse_signal(100, 6, AmplitudeMode::EqualMagnitude, true, &mut trial_rng(9, 4)).unwrap();
        let b = gen_sparse_signal(100, 6, AmplitudeMode::EqualMagnitude, true, &mut trial_rng(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_columns_have_unit_norm() {
        let mut rng = trial_rng(1, 0);
        let phi = gen_matrix(3, 5, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        for norm in crate::linalg::column_norms(phi.entries()) {
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bernoulli_entries_are_plus_minus_half() {
        let mut rng = trial_rng(1, 0);
        let phi = gen_matrix(4, 4, Ensemble::BernoulliUnitCol, &mut rng).unwrap();
        assert!(phi.entries().iter().all(|v| v.abs() == 0.5));
    }

    #[test]
    fn default_sized_matrix_is_reproducible() {
        let a = gen_matrix(200, 400, Ensemble::GaussianUnitCol, &mut trial_rng(42, 7)).unwrap();
        let b = gen_matrix(200, 400, Ensemble::GaussianUnitCol, &mut trial_rng(42, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_tag_is_rejected() {
        assert!(matches!("fourier".parse::<Ensemble>(), Err(Error::InvalidArgument(_))));
        assert_eq!("uniform-sphere".parse::<Ensemble>().unwrap(), Ensemble::UniformSphere);
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let mut rng = trial_rng(2, 0);
        let phi = gen_matrix(20, 40, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        let sig = gen_sparse_signal(40, 3, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        let expected = phi.entries() * sig.values();
        let inst = measure(phi, sig, 0.0, lam(), &mut rng).unwrap();
        assert_eq!(inst.y(), &expected);
    }

    #[test]
    fn noisy_measurement_residual_is_noise() {
        let mut rng = trial_rng(2, 1);
        let phi = gen_matrix(200, 400, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        let sig = gen_sparse_signal(400, 5, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        let inst = measure(phi, sig, 0.025, lam(), &mut rng).unwrap();
        let residual = inst.y() - inst.phi() * inst.signal().values();
        assert_abs_diff_eq!(residual.norm(), inst.noise().norm(), epsilon = 1e-12);
        assert_eq!(inst.recompute_measurement(), *inst.y());
        // sample std of 200 draws with sigma = 0.025
        let std = libm::sqrt(inst.noise().norm_squared() / 200.0);
        assert!((0.018..0.032).contains(&std), "std {std}");
    }

    #[test]
    fn explicit_matrix_must_have_unit_columns() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(MeasurementMatrix::explicit(bad.clone()).is_err());
        let fixed = MeasurementMatrix::normalized(bad).unwrap();
        assert_eq!(fixed.entries()[(1, 1)], 1.0);
        assert_eq!(fixed.ensemble(), Ensemble::Explicit);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let phi = MeasurementMatrix::explicit(DMatrix::identity(3, 3)).unwrap();
        let sig = SparseSignal::from_values(DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(measure(phi, sig, 0.0, lam(), &mut trial_rng(0, 0)), Err(Error::InvalidArgument(_))));
    }
}
