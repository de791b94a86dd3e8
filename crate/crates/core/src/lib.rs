//! Dynamical low-rank approximation of matrix ODEs `Ẏ = F(t, Y)`.
//!
//! The solution is kept as `Y = U S Vᵀ` ([`FactoredMatrix`]) and advanced by
//! rank-adaptive integrators ([`integrators`]) that only ever evaluate `F` in
//! structured form ([`RhsOperator`]). A slab-geometry radiative transfer
//! problem ([`planesource`]) serves as the main benchmark.

// `!(x > 0.0)` style guards are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod integrators;
pub mod lowrank;
pub mod planesource;
pub mod rhs;
pub mod substep;

pub use error::{DlraError, Result};
pub use integrators::{
    bug_step, integrate, parallel_serial_s11_step, parallel_step, EtaColumns, Schedule, StepConfig, StepResult,
    Stepper, ThetaMode, Trajectory,
};
pub use lowrank::{FactoredMatrix, TruncationCores};
pub use planesource::{PlanesourceConfig, PlanesourceProblem, ScalarFluxField};
pub use rhs::{RhsOperator, SylvesterProblem, TangentialProblem};
pub use substep::{MethodKind, OdeMethod};
