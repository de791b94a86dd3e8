//! Building blocks of a single step: the K, L and S substeps, assembly of the
//! augmented coefficient matrix, the normal-component indicator `η` and the
//! rejection test.

use std::fmt;

use nalgebra::DMatrix;

use super::config::{EtaColumns, StepConfig};
use crate::error::{check_dims, DlraError, Result};
use crate::lowrank::{hstack, orthonormalize_augment, pad_block, AugmentedBasis, FactoredMatrix};
use crate::rhs::RhsOperator;
use crate::substep::solve_matrix_ode;

fn check_interval(t0: f64, t1: f64) -> Result<()> {
    if t1 > t0 && t0.is_finite() && t1.is_finite() {
        Ok(())
    } else {
        Err(DlraError::InvalidInput(format!(
            "step needs t1 > t0, got t0 = {t0}, t1 = {t1}"
        )))
    }
}

fn check_shape<O: RhsOperator + ?Sized>(op: &O, y0: &FactoredMatrix) -> Result<()> {
    check_dims("solution shape", op.shape(), y0.shape())
}

/// `K̇ = F(t, K V0ᵀ) V0`, `K(t0) = U0 S0`; returns `K(t1)` and `Û = (U0, Ũ1)`.
pub fn k_step<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<(DMatrix<f64>, AugmentedBasis)> {
    check_interval(t0, t1)?;
    check_shape(op, y0)?;
    let v0 = y0.v();
    let k0 = y0.u() * y0.s();
    let k1 = solve_matrix_ode(|t, k| op.apply_corange(t, k, v0), &k0, t0, t1, cfg.method)?;
    let u_hat = orthonormalize_augment(y0.u(), &k1)?;
    Ok((k1, u_hat))
}

/// `L̇ = F(t, U0 Lᵀ)ᵀ U0`, `L(t0) = V0 S0ᵀ`; returns `L(t1)` and `V̂ = (V0, Ṽ1)`.
pub fn l_step<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<(DMatrix<f64>, AugmentedBasis)> {
    check_interval(t0, t1)?;
    check_shape(op, y0)?;
    let u0 = y0.u();
    let l0 = y0.v() * y0.s().transpose();
    let l1 = solve_matrix_ode(|t, l| op.apply_range(t, u0, l), &l0, t0, t1, cfg.method)?;
    let v_hat = orthonormalize_augment(y0.v(), &l1)?;
    Ok((l1, v_hat))
}

/// `S̄̇ = U0ᵀ F(t, U0 S̄ V0ᵀ) V0`, `S̄(t0) = S0`, with the bases held fixed.
pub fn s_step_parallel<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<DMatrix<f64>> {
    check_interval(t0, t1)?;
    check_shape(op, y0)?;
    let (u0, v0) = (y0.u(), y0.v());
    solve_matrix_ode(|t, s| op.galerkin(t, u0, s, v0), y0.s(), t0, t1, cfg.method)
}

/// `[[S̄, S1L], [S1K, 0]]` with `S1K = Ũ1ᵀK(t1)` (p×r) and `S1L = L(t1)ᵀṼ1` (r×q).
pub fn assemble_parallel_s1(s_bar: &DMatrix<f64>, s1k: &DMatrix<f64>, s1l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = s_bar.nrows();
    check_dims("assemble_parallel_s1 S_bar", (r, r), s_bar.shape())?;
    check_dims("assemble_parallel_s1 S1K", (s1k.nrows(), r), s1k.shape())?;
    check_dims("assemble_parallel_s1 S1L", (r, s1l.ncols()), s1l.shape())?;
    let (p, q) = (s1k.nrows(), s1l.ncols());
    let mut out = DMatrix::zeros(r + p, r + q);
    out.view_mut((0, 0), (r, r)).copy_from(s_bar);
    out.view_mut((0, r), (r, q)).copy_from(s1l);
    out.view_mut((r, 0), (p, r)).copy_from(s1k);
    Ok(out)
}

/// Galerkin step on the augmented bases: `Ŝ̇ = Ûᵀ F(t, Û Ŝ V̂ᵀ) V̂` from
/// `Ŝ(t0) = Ûᵀ Y0 V̂ = blockdiag(S0, 0)`, on the effective columns of `Û`, `V̂`.
pub fn s_step_bug<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    u_hat: &AugmentedBasis,
    v_hat: &AugmentedBasis,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<DMatrix<f64>> {
    check_interval(t0, t1)?;
    check_shape(op, y0)?;
    let r = y0.rank();
    if u_hat.old_rank() != r || v_hat.old_rank() != r {
        return Err(DlraError::DimensionMismatch {
            context: "s_step_bug augmented bases",
            expected: format!("old rank {r}"),
            actual: format!("{} and {}", u_hat.old_rank(), v_hat.old_rank()),
        });
    }
    let (u, v) = (u_hat.effective(), v_hat.effective());
    let s0 = pad_block(y0.s(), u.ncols(), v.ncols());
    solve_matrix_ode(|t, s| op.galerkin(t, &u, s, &v), &s0, t0, t1, cfg.method)
}

/// `η = ‖Ũ1ᵀ F(t0, Y0) Ṽ1‖_F` together with the matrix inside the norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    pub eta: f64,
    /// `Ũ1ᵀ F0 Ṽ1` restricted to the columns actually used.
    pub block: DMatrix<f64>,
    /// Set when only a leading subset of the new directions was used.
    pub estimate: bool,
}

/// Computes `Ũ1ᵀ F(t0, Y0) Ṽ1` from the low-rank factors of `F` when the
/// operator has them, otherwise from a Galerkin evaluation on the stacked
/// bases `(U0, Ũ1)`, `(V0, Ṽ1)`.
pub fn compute_eta<O: RhsOperator + ?Sized>(
    op: &O,
    t0: f64,
    y0: &FactoredMatrix,
    u_tilde: &DMatrix<f64>,
    v_tilde: &DMatrix<f64>,
    columns: EtaColumns,
) -> Result<EtaEstimate> {
    check_shape(op, y0)?;
    check_dims(
        "compute_eta U_tilde rows",
        (y0.nrows(), u_tilde.ncols()),
        u_tilde.shape(),
    )?;
    check_dims(
        "compute_eta V_tilde rows",
        (y0.ncols(), v_tilde.ncols()),
        v_tilde.shape(),
    )?;
    let (mut p, mut q) = (u_tilde.ncols(), v_tilde.ncols());
    let mut estimate = false;
    if let EtaColumns::Leading(k) = columns {
        estimate = k < p || k < q;
        p = p.min(k);
        q = q.min(k);
    }
    if p == 0 || q == 0 {
        return Ok(EtaEstimate {
            eta: 0.0,
            block: DMatrix::zeros(p, q),
            estimate,
        });
    }
    let ut = u_tilde.columns(0, p);
    let vt = v_tilde.columns(0, q);
    let block = match op.low_rank_factors(t0, y0) {
        Some((g, h)) => (ut.tr_mul(&g)) * (vt.tr_mul(&h)).transpose(),
        None => {
            let r = y0.rank();
            let u = hstack(y0.u(), &ut.into_owned());
            let v = hstack(y0.v(), &vt.into_owned());
            let s = pad_block(y0.s(), r + p, r + q);
            op.galerkin(t0, &u, &s, &v).view((r, r), (p, q)).into_owned()
        }
    };
    Ok(EtaEstimate {
        eta: block.norm(),
        block,
        estimate,
    })
}

/// Why an attempted step was repeated with augmented bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectionReason {
    /// No singular value was truncated although the augmentation added
    /// directions.
    NoTruncation,
    /// `hη > cϑ`.
    NormalComponent,
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectionReason::NoTruncation => "no-truncation",
            RejectionReason::NormalComponent => "normal-component",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectionReason),
}

/// Rejection test for an attempt started at rank `r_in`.
///
/// `r1` is the minimal rank meeting the tolerance and `r_hat` the largest
/// rank the augmented core admits. Keeping all `r_hat` values only counts as
/// "nothing truncated" when the augmentation actually added directions
/// (`r_hat > r_in`); otherwise repeating the step could not change anything.
pub fn check_rejection(
    r_in: usize,
    r1: usize,
    r_hat: usize,
    h: f64,
    eta: f64,
    theta: f64,
    cfg: &StepConfig,
) -> Verdict {
    if !cfg.rejection {
        return Verdict::Accept;
    }
    if r1 == r_hat && r_hat > r_in {
        return Verdict::Reject(RejectionReason::NoTruncation);
    }
    if h * eta > cfg.c_reject * theta {
        return Verdict::Reject(RejectionReason::NormalComponent);
    }
    Verdict::Accept
}
