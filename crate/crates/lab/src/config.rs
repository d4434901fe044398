//! Experiment configuration: per-experiment defaults, a JSON file on top,
//! then `key=value` overrides.

use std::path::{Path, PathBuf};

use lca_core::ensemble::{AmplitudeMode, Ensemble};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SupportContainment,
    ActiveRatioHeatmap,
    ThresholdDecay,
    RateCurves,
    TheoremAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::SupportContainment,
        ExperimentKind::ActiveRatioHeatmap,
        ExperimentKind::ThresholdDecay,
        ExperimentKind::RateCurves,
        ExperimentKind::TheoremAudit,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::SupportContainment => "support-containment",
            ExperimentKind::ActiveRatioHeatmap => "active-ratio-heatmap",
            ExperimentKind::ThresholdDecay => "threshold-decay",
            ExperimentKind::RateCurves => "rate-curves",
            ExperimentKind::TheoremAudit => "theorem-audit",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    Fixed,
    Switched,
}

/// Threshold schedule of the decaying run: `low + (high - low) e^{-rate t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Lambda,
    N,
    M,
    S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub sweep: SweepParam,
    pub values: Vec<f64>,
    /// Error grid `0, step, ..., end` in units of `tau`.
    pub grid_step: f64,
    pub grid_end: f64,
    /// Order multiplier of the loose overlay.
    pub estimate_factor: f64,
    pub kkt_tol: f64,
}

/// One audited problem family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFamily {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    #[serde(default)]
    pub q: Option<usize>,
    pub sigma: f64,
    /// Thresholds are drawn from `[lo, hi]`, as multiples of the smallest
    /// admissible one for the theorems and absolutely for the lemmas.
    pub lambda_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub theorem2: AuditFamily,
    pub theorem3: AuditFamily,
    pub lemmas: AuditFamily,
    /// Give up after this many draws per wanted instance.
    pub max_attempts_factor: usize,
    pub sample_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub m: usize,
    pub s_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub trials: usize,
    pub sigma: f64,
    pub seed: u64,
    pub backend: BackendChoice,
    /// Horizon and step size in units of `tau`.
    pub t_max: f64,
    pub dt: f64,
    /// Spacing of recorded samples.
    pub sample_dt: f64,
    pub output_dir: PathBuf,
    pub ensemble: Ensemble,
    pub amplitude: AmplitudeMode,
    pub decay: DecayConfig,
    pub rate: RateConfig,
    pub audit: AuditConfig,
    /// Also write full internal-state dumps next to trajectory CSVs.
    pub dump_states: bool,
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            let v = (a + (b - a) * k as f64 / (count - 1) as f64).exp();
            (v * 1e6).round() / 1e6
        })
        .collect()
}

/// Complete default configuration for `kind`.
pub fn defaults(kind: ExperimentKind) -> Value {
    let mut base = json!({
        "experiment": kind.tag(),
        "n": 400,
        "m": 200,
        "s_grid": (1..=60).collect::<Vec<usize>>(),
        "lambda_grid": log_grid(0.02, 0.5, 25),
        "trials": 100,
        "sigma": 0.0,
        "seed": 20_240_601u64,
        "backend": "fixed",
        "t_max": 15.0,
        "dt": 0.01,
        "sample_dt": 0.1,
        "output_dir": format!("out/{}", kind.tag()),
        "ensemble": "gaussian-unit-col",
        "amplitude": "equal-magnitude",
        "decay": {"lambda_high": 0.3, "lambda_low": 0.08, "rate": 1.0},
        "rate": {
            "sweep": "lambda",
            "values": [0.02, 0.04, 0.06, 0.1, 0.2],
            "grid_step": 0.05,
            "grid_end": 5.0,
            "estimate_factor": 5.0,
            "kkt_tol": 1e-6
        },
        "audit": {
            "theorem2": {"n": 16, "m": 2000, "s": 2, "sigma": 0.005, "lambda_range": [1.0, 1.5]},
            "theorem3": {"n": 12, "m": 4000, "s": 1, "q": 4, "sigma": 0.0, "lambda_range": [1.0, 1.5]},
            "lemmas": {"n": 20, "m": 40, "s": 3, "sigma": 0.0, "lambda_range": [0.05, 0.3]},
            "max_attempts_factor": 10,
            "sample_dt": 0.01
        },
        "dump_states": false
    });
    let specific = match kind {
        ExperimentKind::SupportContainment | ExperimentKind::ActiveRatioHeatmap => json!({}),
        ExperimentKind::ThresholdDecay => json!({
            "s_grid": [5],
            "lambda_grid": [0.3, 0.08],
            "sigma": 0.025,
            "sample_dt": 0.01
        }),
        ExperimentKind::RateCurves => json!({
            "s_grid": [5],
            "lambda_grid": [0.1],
            "t_max": 40.0
        }),
        ExperimentKind::TheoremAudit => json!({
            "backend": "switched",
            "s_grid": [2],
            "lambda_grid": [0.2]
        }),
    };
    merge(&mut base, specific);
    base
}

/// Recursive object merge; non-object values replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Parses `a.b.c=value` into a patch object. The value is read as JSON when
/// possible and as a bare string otherwise.
pub fn parse_override(spec: &str) -> LabResult<Value> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| LabError::config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(LabError::config(format!("override `{spec}` has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_owned()));
    let mut out = value;
    for part in key.rsplit('.') {
        let mut obj = Map::new();
        obj.insert(part.to_owned(), out);
        out = Value::Object(obj);
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Layers defaults, an optional config file and overrides. The
    /// experiment named in the file must agree with `kind`.
    pub fn load(kind: ExperimentKind, file: Option<&Path>, overrides: &[String]) -> LabResult<Self> {
        let mut value = defaults(kind);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            let patch: Value = serde_json::from_str(&text)
                .map_err(|e| LabError::config(format!("{}: {e}", path.display())))?;
            if !patch.is_object() {
                return Err(LabError::config(format!("{}: expected a JSON object", path.display())));
            }
            merge(&mut value, patch);
        }
        for spec in overrides {
            merge(&mut value, parse_override(spec)?);
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| LabError::config(e.to_string()))?;
        if cfg.experiment != kind {
            return Err(LabError::config(format!(
                "config is for `{}` but `{}` was requested",
                cfg.experiment.tag(),
                kind.tag()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_defaults(kind: ExperimentKind) -> Self {
        serde_json::from_value(defaults(kind)).expect("built-in defaults deserialize")
    }

    pub fn validate(&self) -> LabResult<()> {
        let fail = |msg: &str| Err(LabError::config(msg));
        if self.s_grid.is_empty() || self.lambda_grid.is_empty() {
            return fail("s_grid and lambda_grid must be non-empty");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.n == 0 || self.m == 0 {
            return fail("n and m must be positive");
        }
        if self.s_grid.iter().any(|&s| s == 0 || s > self.n) {
            return fail("every sparsity must lie in 1..=n");
        }
        if self.lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return fail("every threshold must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail("sigma must be non-negative");
        }
        if !(self.dt > 0.0 && self.t_max > self.dt && self.sample_dt > 0.0) {
            return fail("need 0 < dt < t_max and sample_dt > 0");
        }
        if self.ensemble == Ensemble::Explicit {
            return fail("experiments draw their matrices; the explicit ensemble is not available");
        }
        let d = &self.decay;
        if !(d.lambda_low > 0.0 && d.lambda_low <= d.lambda_high && d.rate > 0.0) {
            return fail("decay needs 0 < lambda_low <= lambda_high and rate > 0");
        }
        let r = &self.rate;
        if r.values.is_empty() || !(r.grid_step > 0.0 && r.grid_end > r.grid_step && r.estimate_factor > 0.0) {
            return fail("rate sweep needs values, a positive grid step, grid_end > grid_step and a positive factor");
        }
        if r.grid_end > self.t_max {
            return fail("rate grid_end must not exceed t_max");
        }
        if r.sweep != SweepParam::Lambda && r.values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0)) {
            return fail("dimension sweeps need positive integer values");
        }
        for (name, fam) in [("theorem2", &self.audit.theorem2), ("theorem3", &self.audit.theorem3), ("lemmas", &self.audit.lemmas)] {
            if fam.s == 0 || fam.s > fam.n || fam.m == 0 {
                return fail(&format!("audit.{name}: need 1 <= s <= n and m >= 1"));
            }
            let [lo, hi] = fam.lambda_range;
            if !(lo > 0.0 && lo <= hi) {
                return fail(&format!("audit.{name}: lambda_range must be positive and ordered"));
            }
        }
        match self.audit.theorem3.q {
            Some(q) if q >= 1 && self.audit.theorem3.s + q <= self.audit.theorem3.n => {}
            _ => return fail("audit.theorem3.q must satisfy 1 <= q and s + q <= n"),
        }
        if self.audit.max_attempts_factor == 0 || !(self.audit.sample_dt > 0.0) {
            return fail("audit.max_attempts_factor and audit.sample_dt must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::from_defaults(kind);
            cfg.validate().unwrap();
            assert_eq!(cfg.experiment, kind);
        }
        let fig = ExperimentConfig::from_defaults(ExperimentKind::ActiveRatioHeatmap);
        assert_eq!(fig.lambda_grid.len(), 25);
        assert_eq!(fig.lambda_grid[0], 0.02);
        assert_eq!(fig.lambda_grid[24], 0.5);
        assert_eq!(fig.s_grid.len(), 60);
    }

    #[test]
    fn overrides_nest_and_parse() {
        let cfg = ExperimentConfig::load(
            ExperimentKind::ThresholdDecay,
            None,
            &["decay.rate=2.5".into(), "trials=3".into(), "output_dir=tmp/x".into()],
        )
        .unwrap();
        assert_eq!(cfg.decay.rate, 2.5);
        assert_eq!(cfg.decay.lambda_high, 0.3);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.output_dir, PathBuf::from("tmp/x"));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let load = |o: &str| ExperimentConfig::load(ExperimentKind::RateCurves, None, &[o.to_owned()]);
        assert!(load("trials=0").is_err());
        assert!(load("s_grid=[]").is_err());
        assert!(load("no_such_field=1").is_err());
        assert!(load("justtext").is_err());
        assert!(load("experiment=threshold-decay").is_err());
        assert!(load("rate.sweep=n").is_err());
    }
}
