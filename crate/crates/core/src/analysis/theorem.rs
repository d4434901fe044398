use alloc::collections::BTreeMap;
use alloc::string::String;

use nalgebra::DVector;

use super::bounds::{alpha, c_delta};
use crate::ensemble::ProblemInstance;
use crate::linalg::{self, norm_inf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Theorem {
    /// Only nodes of the optimal support ever activate.
    OptimalSupport,
    /// The active set never exceeds `q` nodes.
    BoundedActiveSet,
}

/// One inequality `lhs <= rhs` (or `>=`), with `slack >= 0` when it holds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Margin {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl Margin {
    fn at_most(lhs: f64, rhs: f64) -> Self {
        Margin { lhs, rhs, slack: rhs - lhs }
    }

    fn at_least(lhs: f64, rhs: f64) -> Self {
        Margin { lhs, rhs, slack: lhs - rhs }
    }

    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}

/// Scalars the conditions were evaluated with.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TheoremInputs {
    pub s: usize,
    pub q: Option<usize>,
    pub lambda: f64,
    pub delta: f64,
    pub norm_signal: f64,
    pub norm_noise: f64,
    /// `||Phi_{G^c}^T eps||_inf` over the complement of the optimal support.
    pub off_support_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TheoremCheck {
    pub theorem: Theorem,
    pub holds: bool,
    pub margins: BTreeMap<String, Margin>,
    pub inputs: TheoremInputs,
    pub diagnostic: Option<String>,
}

fn constant_lambda(instance: &ProblemInstance) -> Result<f64> {
    instance
        .threshold()
        .constant_value()
        .ok_or_else(|| Error::invalid("theorem conditions are stated for a constant threshold"))
}

fn inputs(instance: &ProblemInstance, delta: f64, q: Option<usize>) -> Result<TheoremInputs> {
    Ok(TheoremInputs {
        s: instance.signal().s(),
        q,
        lambda: constant_lambda(instance)?,
        delta,
        norm_signal: instance.signal().norm(),
        norm_noise: instance.noise().norm(),
        off_support_noise: off_support_noise(instance),
    })
}

/// Optimal-support conditions for a start at output `a0`:
/// `||a_dag - a0|| <= C_delta(S)` and
/// `(1 - alpha delta sqrt(S)) lambda >= alpha delta (||a_dag|| + sqrt(1 - delta) ||eps||) + ||Phi_{G^c}^T eps||_inf`.
///
/// `delta` is the RIP constant of order `S + 1`.
pub fn check_theorem2(instance: &ProblemInstance, delta: f64, a0: &DVector<f64>) -> Result<TheoremCheck> {
    if a0.len() != instance.n() {
        return Err(Error::invalid("initial output has the wrong length"));
    }
    let support = instance.signal().support();
    let (a0_support, _) = crate::dynamics::support_and_signs(a0);
    if !linalg::is_subset(&a0_support, support) {
        return Err(Error::PreconditionViolated(
            "the initial output is not supported inside the optimal support".into(),
        ));
    }
    let al = alpha(delta)?;
    let inp = inputs(instance, delta, None)?;
    let s = inp.s as f64;
    let distance = (instance.signal().values() - a0).norm();
    let initial = Margin::at_most(distance, c_delta(inp.s, delta, inp.norm_signal, inp.norm_noise, inp.lambda)?);
    let floor = Margin::at_least(
        (1.0 - al * delta * libm::sqrt(s)) * inp.lambda,
        al * delta * (inp.norm_signal + libm::sqrt(1.0 - delta) * inp.norm_noise) + inp.off_support_noise,
    );
    let mut margins = BTreeMap::new();
    margins.insert(String::from("initial_distance"), initial);
    margins.insert(String::from("threshold_floor"), floor);
    let holds = margins.values().all(Margin::holds);
    Ok(TheoremCheck { theorem: Theorem::OptimalSupport, holds, margins, inputs: inp, diagnostic: None })
}

/// Bounded-active-set conditions for a start at internal state `u0`:
/// `||u0|| <= lambda sqrt(q)` and
/// `lambda >= (1 + d) / (1 - 3 d) / sqrt(q) (||a_dag|| + sqrt(1 - d) ||eps||)`.
///
/// `delta_bar` is the RIP constant of order `S + q`. For `delta_bar >= 1/3`
/// (or `q = 0`) the second condition cannot hold; the check reports
/// `holds = false` with a diagnostic instead of failing.
pub fn check_theorem3(instance: &ProblemInstance, delta_bar: f64, q: usize, u0: &DVector<f64>) -> Result<TheoremCheck> {
    if u0.len() != instance.n() {
        return Err(Error::invalid("initial state has the wrong length"));
    }
    if !(delta_bar >= 0.0) {
        return Err(Error::invalid("RIP constant must be non-negative"));
    }
    let inp = inputs(instance, delta_bar, Some(q))?;
    let sq = libm::sqrt(q as f64);
    let mut margins = BTreeMap::new();
    margins.insert(String::from("initial_energy"), Margin::at_most(u0.norm(), inp.lambda * sq));
    let mut diagnostic = None;
    let floor = if delta_bar >= 1.0 / 3.0 || q == 0 {
        diagnostic = Some(if q == 0 {
            String::from("q = 0 admits no threshold")
        } else {
            alloc::format!("delta_bar = {delta_bar} >= 1/3: the threshold condition is not applicable")
        });
        Margin::at_least(inp.lambda, f64::INFINITY)
    } else {
        let factor = (1.0 + delta_bar) / (1.0 - 3.0 * delta_bar) / sq;
        Margin::at_least(inp.lambda, factor * (inp.norm_signal + libm::sqrt(1.0 - delta_bar) * inp.norm_noise))
    };
    margins.insert(String::from("threshold_floor"), floor);
    let holds = margins.values().all(Margin::holds);
    Ok(TheoremCheck { theorem: Theorem::BoundedActiveSet, holds, margins, inputs: inp, diagnostic })
}

/// Smallest constant threshold satisfying the optimal-support threshold
/// condition, or `None` when `alpha delta sqrt(S) >= 1`.
pub fn theorem2_min_lambda(instance: &ProblemInstance, delta: f64) -> Result<Option<f64>> {
    let al = alpha(delta)?;
    let inp = inputs(instance, delta, None)?;
    let lead = 1.0 - al * delta * libm::sqrt(inp.s as f64);
    if !(lead > 0.0) {
        return Ok(None);
    }
    let rhs = al * delta * (inp.norm_signal + libm::sqrt(1.0 - delta) * inp.norm_noise) + inp.off_support_noise;
    Ok(Some(rhs / lead))
}

/// Smallest constant threshold satisfying the bounded-active-set threshold
/// condition, or `None` when it is not applicable.
pub fn theorem3_min_lambda(instance: &ProblemInstance, delta_bar: f64, q: usize) -> Result<Option<f64>> {
    if !(0.0..1.0 / 3.0).contains(&delta_bar) || q == 0 {
        return Ok(None);
    }
    let inp = inputs(instance, delta_bar, Some(q))?;
    let factor = (1.0 + delta_bar) / (1.0 - 3.0 * delta_bar) / libm::sqrt(q as f64);
    Ok(Some(factor * (inp.norm_signal + libm::sqrt(1.0 - delta_bar) * inp.norm_noise)))
}

pub(crate) fn off_support_noise(instance: &ProblemInstance) -> f64 {
    let support = instance.signal().support();
    let corr = instance.phi().tr_mul(instance.noise());
    let mut masked = corr;
    for &k in support {
        masked[k] = 0.0;
    }
    norm_inf(&masked)
}
