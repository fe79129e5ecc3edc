//! Time-delayed coupling: a copy `X̂` driven by the delayed signs of itself and
//! of the driver, approximating the reflection/synchronized reference, and the
//! staged concatenation of such couplings.

mod kernel;
mod solver;
mod stages;

pub use kernel::{
    delay_bound_constant, delay_bound_integrand, psi, sigma, sign_flip_frequency, sign_flip_probability,
    sign_flip_probability_for_delay, DelayKernel,
};
pub(crate) use solver::check_grid_resolves_kernel;
pub(crate) use stages::run_attempt;
pub use solver::{
    solve_delayed_coupling, solve_delayed_coupling_with, DelayOptions, DelayOutcome, DelayPoint, DelayedRun,
    LocalizationGuard,
};
pub use stages::{
    calibrate_stage_epsilons, calibrate_stage_epsilons_with, concatenated_coupling, sample_scaled_times,
    stage_epsilons_from_sample, worst_case_start, StageCalibration, StageLedger, StagePlan, StageRecord,
    SAFETY_FACTOR,
};
