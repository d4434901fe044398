//! RIP constants, theorem conditions, lemma checks and rate statistics.
//!
//! Everything here is a pure function of its inputs; nothing simulates.

mod bounds;
mod lemmas;
mod rate;
mod rip;
mod stats;
mod theorem;

pub use bounds::{alpha, c_delta, delta_bound_thm2, delta_bound_thm3, theoretical_decay, DeltaBound};
pub use lemmas::{check_lemma1, check_lemma1_with_p, check_lemma2, Lemma1Report, Lemma2Report};
pub use rate::{d_constant, error_series, fit_rate, fit_rate_series, time_to_fraction, RateReport, FIT_FLOOR, ZERO_ERROR};
pub use rip::{
    prepare_scan, report_from_scan, rip_bruteforce, rip_bruteforce_capped, rip_estimate, rip_estimate_inflated,
    rip_sampled_lower_bound, rip_scan_gram, RipMethod, RipReport, ScanResult, ENUMERATION_CAP,
};
pub use stats::{active_set_stats, ActiveSetStats};
pub use theorem::{
    check_theorem2, check_theorem3, theorem2_min_lambda, theorem3_min_lambda, Margin, Theorem, TheoremCheck,
    TheoremInputs,
};
