//! Explicit one-step integrators for the small matrix ODEs of the K, L and S
//! substeps.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{DlraError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Euler,
    Rk4,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::Euler => "euler",
            MethodKind::Rk4 => "rk4",
        })
    }
}

impl FromStr for MethodKind {
    type Err = DlraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(MethodKind::Euler),
            "rk4" => Ok(MethodKind::Rk4),
            other => Err(DlraError::InvalidInput(format!("unknown substep method '{other}'"))),
        }
    }
}

/// Fixed-step explicit method with `substep_count` equal substeps per call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OdeMethod {
    pub kind: MethodKind,
    pub substep_count: usize,
}

impl OdeMethod {
    pub fn new(kind: MethodKind, substep_count: usize) -> Result<Self> {
        if substep_count == 0 {
            return Err(DlraError::InvalidInput("substep_count must be >= 1".into()));
        }
        Ok(Self { kind, substep_count })
    }

    pub fn euler(substep_count: usize) -> Self {
        Self::new(MethodKind::Euler, substep_count).expect("substep_count >= 1")
    }

    pub fn rk4(substep_count: usize) -> Self {
        Self::new(MethodKind::Rk4, substep_count).expect("substep_count >= 1")
    }
}

impl Default for OdeMethod {
    fn default() -> Self {
        Self::rk4(1)
    }
}

/// Integrates `Ż = rhs(t, Z)` from `t0` to `t1` starting at `z0`.
///
/// Blowup is reported with `stage` counting right-hand-side evaluations from
/// zero and `step` the substep index.
pub fn solve_matrix_ode<F>(rhs: F, z0: &DMatrix<f64>, t0: f64, t1: f64, method: OdeMethod) -> Result<DMatrix<f64>>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    if !(t1 >= t0) {
        return Err(DlraError::InvalidInput(format!("t1 = {t1} < t0 = {t0}")));
    }
    if method.substep_count == 0 {
        return Err(DlraError::InvalidInput("substep_count must be >= 1".into()));
    }
    let n = method.substep_count;
    let delta = (t1 - t0) / n as f64;
    let mut z = z0.clone();
    let mut stage = 0usize;
    let check = |m: &DMatrix<f64>, step: usize, stage: usize| -> Result<()> {
        if m.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(DlraError::NumericalBlowup {
                context: "solve_matrix_ode",
                step,
                stage,
            })
        }
    };
    for step in 0..n {
        let t = t0 + step as f64 * delta;
        match method.kind {
            MethodKind::Euler => {
                let k1 = rhs(t, &z);
                check(&k1, step, stage)?;
                stage += 1;
                z += k1 * delta;
            }
            MethodKind::Rk4 => {
                let half = 0.5 * delta;
                let k1 = rhs(t, &z);
                check(&k1, step, stage)?;
                let k2 = rhs(t + half, &(&z + &k1 * half));
                check(&k2, step, stage + 1)?;
                let k3 = rhs(t + half, &(&z + &k2 * half));
                check(&k3, step, stage + 2)?;
                let k4 = rhs(t + delta, &(&z + &k3 * delta));
                check(&k4, step, stage + 3)?;
                stage += 4;
                z += (k1 + (k2 + k3) * 2.0 + k4) * (delta / 6.0);
            }
        }
        check(&z, step, stage)?;
    }
    Ok(z)
}
