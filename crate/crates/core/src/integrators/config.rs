use std::fmt;
use std::str::FromStr;

use crate::error::{DlraError, Result};
use crate::substep::OdeMethod;

/// How the truncation tolerance `ϑ` is obtained from `theta_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThetaMode {
    /// `ϑ = theta_bar`.
    Absolute,
    /// `ϑ = theta_bar · ‖Σ̂‖_F`, evaluated per attempt.
    Relative,
}

impl fmt::Display for ThetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaMode::Absolute => "absolute",
            ThetaMode::Relative => "relative",
        })
    }
}

impl FromStr for ThetaMode {
    type Err = DlraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" => Ok(ThetaMode::Absolute),
            "relative" => Ok(ThetaMode::Relative),
            other => Err(DlraError::InvalidInput(format!("unknown theta mode '{other}'"))),
        }
    }
}

/// Columns of `Ũ1`, `Ṽ1` entering `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EtaColumns {
    #[default]
    All,
    /// Only the leading `k` new directions; the result is then an estimate.
    Leading(usize),
}

impl fmt::Display for EtaColumns {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaColumns::All => f.write_str("all"),
            EtaColumns::Leading(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for EtaColumns {
    type Err = DlraError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(EtaColumns::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(EtaColumns::Leading(k)),
            _ => Err(DlraError::InvalidInput(format!(
                "eta_columns must be 'all' or a positive integer, got '{s}'"
            ))),
        }
    }
}

/// The three independent substep tasks of a parallel step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Substep {
    K,
    L,
    S,
}

/// Execution policy for the independent substeps.
///
/// Every policy produces bitwise the same numbers; only the scheduling
/// differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Schedule {
    /// Work-stealing on the rayon pool.
    #[default]
    Parallel,
    /// K, then L, then S on the calling thread.
    Sequential,
    /// One thread per task; results are published in exactly this order.
    /// For two-task steps the `S` entry is ignored.
    CompletionOrder([Substep; 3]),
}

/// Tolerance, rejection policy and substep solver shared by all steppers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub theta_bar: f64,
    pub theta_mode: ThetaMode,
    /// `c` in the rejection test `hη > cϑ`.
    pub c_reject: f64,
    /// Rank cap; `None` means `min(m, n)`. Larger values are clamped.
    pub r_max: Option<usize>,
    pub max_retries: usize,
    pub method: OdeMethod,
    pub eta_columns: EtaColumns,
    /// Disables both rejection criteria. `η` is still reported.
    pub rejection: bool,
    pub schedule: Schedule,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            theta_bar: 1e-2,
            theta_mode: ThetaMode::Relative,
            c_reject: 1.0,
            r_max: None,
            max_retries: 10,
            method: OdeMethod::default(),
            eta_columns: EtaColumns::All,
            rejection: true,
            schedule: Schedule::Parallel,
        }
    }
}

impl StepConfig {
    /// Truncation with a fixed absolute tolerance and no step rejection.
    pub fn fixed_tolerance(theta: f64, method: OdeMethod) -> Self {
        Self {
            theta_bar: theta,
            theta_mode: ThetaMode::Absolute,
            method,
            rejection: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_bar >= 0.0) || !self.theta_bar.is_finite() {
            return Err(DlraError::InvalidInput(format!(
                "theta_bar must be finite and >= 0, got {}",
                self.theta_bar
            )));
        }
        if !(self.c_reject > 0.0) || !self.c_reject.is_finite() {
            return Err(DlraError::InvalidInput(format!(
                "c_reject must be finite and > 0, got {}",
                self.c_reject
            )));
        }
        if self.r_max == Some(0) {
            return Err(DlraError::InvalidInput("r_max must be >= 1".into()));
        }
        if self.method.substep_count == 0 {
            return Err(DlraError::InvalidInput("substep_count must be >= 1".into()));
        }
        if self.eta_columns == EtaColumns::Leading(0) {
            return Err(DlraError::InvalidInput("eta_columns must be >= 1".into()));
        }
        if let Schedule::CompletionOrder(order) = self.schedule {
            for task in [Substep::K, Substep::L, Substep::S] {
                if order.iter().filter(|&&x| x == task).count() != 1 {
                    return Err(DlraError::InvalidInput(format!(
                        "completion order {order:?} is not a permutation"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rank cap for an `m×n` problem.
    pub fn effective_r_max(&self, m: usize, n: usize) -> usize {
        let full = m.min(n);
        self.r_max.map_or(full, |r| r.min(full))
    }

    /// `ϑ` for an augmented core of Frobenius norm `core_norm`.
    pub fn theta(&self, core_norm: f64) -> f64 {
        match self.theta_mode {
            ThetaMode::Absolute => self.theta_bar,
            ThetaMode::Relative => self.theta_bar * core_norm,
        }
    }
}
