//! LCA dynamics: the vector field, threshold schedules and two simulation
//! backends (fixed-step RK4 and exact switched-linear propagation).

mod fixed_step;
mod linear;
mod switched;
mod system;
mod threshold;
mod trajectory;

pub use fixed_step::{simulate_fixed_step, FixedStepOptions, OutputTimes};
pub use linear::{fixed_point_for_support, phi_fun, steady_state_candidate, support_and_signs};
pub use switched::{simulate_switched, SegmentPropagator, SwitchedOptions};
pub use system::{lca_rhs, LcaOperator, LcaState, GRAM_CACHE_MAX_N};
pub use threshold::{eval_threshold, soft_threshold, soft_threshold_scalar, ThresholdSchedule};
pub use trajectory::{Backend, NodeSwitch, Segment, SwitchDirection, SwitchEvent, Trajectory};
