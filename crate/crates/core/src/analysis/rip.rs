use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;

use crate::linalg::{self, binomial, Combinations};
use crate::{Error, Result};

/// Default largest number of supports a brute-force scan may visit.
pub const ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RipMethod {
    Bruteforce,
    Estimate,
    SampledLowerBound,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RipReport {
    pub order: usize,
    pub delta: f64,
    pub method: RipMethod,
    /// Support attaining `delta` (first in lexicographic order on ties).
    pub witnessing_support: Option<Vec<usize>>,
    /// `delta` only bounds the true constant from below.
    pub lower_bound: bool,
    pub supports_checked: u128,
}

/// Outcome of scanning part of the support space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub delta: f64,
    pub support: Vec<usize>,
    pub count: u128,
}

impl ScanResult {
    /// Deterministic max-reduction: on ties the earlier (`self`) part wins.
    pub fn merge(self, other: ScanResult) -> ScanResult {
        let count = self.count + other.count;
        if other.delta > self.delta || self.support.is_empty() && !other.support.is_empty() {
            ScanResult { count, ..other }
        } else {
            ScanResult { count, ..self }
        }
    }
}

/// Scans the size-`k` supports of a Gram matrix, optionally only those whose
/// smallest index is `first`. Disjoint `first` values partition the space.
pub fn rip_scan_gram(gram: &DMatrix<f64>, k: usize, first: Option<usize>) -> ScanResult {
    let n = gram.ncols();
    let mut iter = match first {
        Some(f) => Combinations::with_first(n, k, f),
        None => Combinations::new(n, k),
    };
    let mut best = ScanResult { delta: f64::NEG_INFINITY, support: Vec::new(), count: 0 };
    let mut sub = DMatrix::zeros(k, k);
    while let Some(s) = iter.next_subset() {
        for i in 0..k {
            for j in 0..k {
                sub[(i, j)] = gram[(s[i], s[j])];
            }
        }
        let d = linalg::isometry_deviation(&sub);
        best.count += 1;
        if d > best.delta {
            best.delta = d;
            best.support.clear();
            best.support.extend_from_slice(s);
        }
    }
    best
}

fn check_order(phi: &DMatrix<f64>, k: usize, cap: u128) -> Result<u128> {
    let (m, n) = phi.shape();
    if k == 0 || k > n.min(m) {
        return Err(Error::invalid(alloc::format!("RIP order must lie in 1..=min(m, n) = {}", n.min(m))));
    }
    let supports = binomial(n, k);
    if supports > cap {
        return Err(Error::TooLarge { supports, cap });
    }
    Ok(supports)
}

/// Exact `delta_k` by enumerating every size-`k` support.
pub fn rip_bruteforce(phi: &DMatrix<f64>, k: usize) -> Result<RipReport> {
    rip_bruteforce_capped(phi, k, ENUMERATION_CAP)
}

pub fn rip_bruteforce_capped(phi: &DMatrix<f64>, k: usize, cap: u128) -> Result<RipReport> {
    check_order(phi, k, cap)?;
    let gram = phi.tr_mul(phi);
    let scan = rip_scan_gram(&gram, k, None);
    Ok(report_from_scan(k, scan))
}

/// Validates `(phi, k)` against the cap and returns the Gram matrix, for
/// callers that scan the partitions themselves.
pub fn prepare_scan(phi: &DMatrix<f64>, k: usize, cap: u128) -> Result<DMatrix<f64>> {
    check_order(phi, k, cap)?;
    Ok(phi.tr_mul(phi))
}

pub fn report_from_scan(k: usize, scan: ScanResult) -> RipReport {
    RipReport {
        order: k,
        delta: scan.delta.max(0.0),
        method: RipMethod::Bruteforce,
        witnessing_support: Some(scan.support),
        lower_bound: false,
        supports_checked: scan.count,
    }
}

/// `sqrt(s ln(n / s) / m)`: the random-matrix scaling with constant one.
pub fn rip_estimate(s: usize, n: usize, m: usize) -> Result<RipReport> {
    rip_estimate_inflated(s, 1.0, n, m)
}

/// `sqrt(factor s ln(n / s) / m)`. The logarithm keeps `n / s`, so
/// `factor = 5` gives the "five times the sparsity" overlay.
pub fn rip_estimate_inflated(s: usize, factor: f64, n: usize, m: usize) -> Result<RipReport> {
    if s == 0 || s > n || m == 0 {
        return Err(Error::invalid("estimate needs 1 <= s <= n and m >= 1"));
    }
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid("inflation factor must be positive"));
    }
    let delta = libm::sqrt(factor * s as f64 * libm::log(n as f64 / s as f64) / m as f64);
    Ok(RipReport {
        order: s,
        delta,
        method: RipMethod::Estimate,
        witnessing_support: None,
        lower_bound: false,
        supports_checked: 0,
    })
}

/// Lower bound on `delta_k` from `samples` random supports.
pub fn rip_sampled_lower_bound<R: Rng + ?Sized>(phi: &DMatrix<f64>, k: usize, samples: usize, rng: &mut R) -> Result<RipReport> {
    check_order(phi, k, u128::MAX)?;
    let n = phi.ncols();
    let gram = phi.tr_mul(phi);
    let mut best = ScanResult { delta: f64::NEG_INFINITY, support: Vec::new(), count: 0 };
    for _ in 0..samples.max(1) {
        let mut s = index::sample(rng, n, k).into_vec();
        s.sort_unstable();
        let d = linalg::isometry_deviation(&linalg::sub_gram(&gram, &s));
        best.count += 1;
        if d > best.delta {
            best.delta = d;
            best.support = s;
        }
    }
    Ok(RipReport {
        order: k,
        delta: best.delta.max(0.0),
        method: RipMethod::SampledLowerBound,
        witnessing_support: Some(best.support),
        lower_bound: true,
        supports_checked: best.count,
    })
}
