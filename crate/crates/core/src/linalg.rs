//! Small dense linear-algebra helpers shared by the dynamics and analysis
//! modules: restricted Gram matrices, symmetric spectra, index-set utilities
//! and a k-subset enumerator.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const SINGULAR_TOL: f64 = 1e-10;

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn column_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.norm()).collect()
}

/// Columns of `m` listed in `idx`, in that order.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_columns(idx.iter())
}

/// `gram[idx, idx]`.
pub fn sub_gram(gram: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let k = idx.len();
    DMatrix::from_fn(k, k, |i, j| gram[(idx[i], idx[j])])
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    match a.nrows() {
        0 => (1.0, 1.0),
        1 => (a[(0, 0)], a[(0, 0)]),
        _ => {
            let ev = a.symmetric_eigenvalues();
            (ev.min(), ev.max())
        }
    }
}

/// `max(|lambda_max - 1|, |1 - lambda_min|)` for a restricted Gram matrix:
/// the tightest isometry constant on that one support.
pub fn isometry_deviation(sub_gram: &DMatrix<f64>) -> f64 {
    let (lo, hi) = symmetric_extremes(sub_gram);
    (hi - 1.0).abs().max((1.0 - lo).abs())
}

/// Symmetric eigendecomposition that reports non-convergence instead of
/// panicking.
pub fn symmetric_eigen(a: DMatrix<f64>, time: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            eigenvectors: DMatrix::zeros(0, 0),
            eigenvalues: DVector::zeros(0),
        });
    }
    SymmetricEigen::try_new(a, f64::EPSILON, 1000 * n.max(10)).ok_or_else(|| Error::NumericFailure {
        time,
        reason: "symmetric eigendecomposition did not converge".into(),
    })
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Whether sorted `a` is contained in sorted `b`.
pub fn is_subset(a: &[usize], b: &[usize]) -> bool {
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
    }
    true
}

/// Union of two sorted index sets.
pub fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Lexicographic enumeration of the k-subsets of `0..n`, optionally pinned to
/// a fixed smallest element so the space can be split into disjoint parts.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    pinned: bool,
    started: bool,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            pinned: false,
            started: false,
            done: k > n,
        }
    }

    /// Only the subsets whose smallest element is `first`.
    pub fn with_first(n: usize, k: usize, first: usize) -> Self {
        let done = k == 0 || first + k > n;
        Combinations {
            n,
            idx: (first..first + k).collect(),
            pinned: true,
            started: false,
            done,
        }
    }

    /// Advances to the next subset; returns `None` once exhausted.
    pub fn next_subset(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        let k = self.idx.len();
        let lowest = if self.pinned { 1 } else { 0 };
        let mut i = k;
        while i > lowest {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(&self.idx);
            }
        }
        self.done = true;
        None
    }
}
