//! Rank-adaptive integrators: the parallel integrator, its serial-`Ŝ₁₁`
//! variant and the rank-adaptive BUG integrator, with step rejection and the
//! outer time loop.

mod config;
mod exec;
mod stepper;
mod steps;
mod trajectory;

pub use config::{EtaColumns, Schedule, StepConfig, Substep, ThetaMode};
pub use exec::{run_three, run_two};
pub use stepper::{
    bug_step, parallel_serial_s11_step, parallel_step, PhaseTimings, StepResult, Stepper, TRUNCATION_SLACK,
};
pub use steps::{
    assemble_parallel_s1, check_rejection, compute_eta, k_step, l_step, s_step_bug, s_step_parallel, EtaEstimate,
    RejectionReason, Verdict,
};
pub use trajectory::{integrate, integrate_observed, time_grid, Snapshot, StepRecord, Trajectory};
