//! Driver for the `dlra` integrators: configuration, single runs,
//! side-by-side comparisons and step-size convergence studies, all writing
//! CSV files.

pub mod config;
pub mod error;
pub mod output;
pub mod problem;
pub mod run;

pub use config::{ProblemKind, RunConfig};
pub use error::{HarnessError, Result};
pub use problem::Problem;
pub use run::{
    compare, convergence_study, fit_loglog_slope, relative_l2, run, CompareMetric, CompareReport, CompareRow,
    ConvergenceRow, ConvergenceTable, RunOutcome, ThetaRule,
};
