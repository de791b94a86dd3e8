//! Complete time steps: the parallel integrator, its serial-`Ŝ₁₁` variant and
//! the rank-adaptive BUG integrator, each with step rejection.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::config::StepConfig;
use super::exec::{run_three, run_two};
use super::steps::{
    assemble_parallel_s1, check_rejection, compute_eta, k_step, l_step, s_step_bug, s_step_parallel, EtaEstimate,
    RejectionReason, Verdict,
};
use crate::error::{check_dims, DlraError, Result};
use crate::lowrank::{
    assemble_truncated, pad_block, truncate_svd_capped, AugmentedBasis, FactoredMatrix, TruncationCores,
};
use crate::rhs::RhsOperator;

/// Wall time per phase, summed over all attempts of a step. `merge` covers
/// assembly, `η` and truncation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub k: Duration,
    pub l: Duration,
    pub s: Duration,
    pub merge: Duration,
    pub total: Duration,
}

impl AddAssign for PhaseTimings {
    fn add_assign(&mut self, rhs: Self) {
        self.k += rhs.k;
        self.l += rhs.l;
        self.s += rhs.s;
        self.merge += rhs.merge;
        self.total += rhs.total;
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub y1: FactoredMatrix,
    pub rank_out: usize,
    /// Rank of the state the accepted attempt started from.
    pub working_rank: usize,
    /// `(r̂_U, r̂_V)` of the accepted attempt.
    pub augmented_ranks: (usize, usize),
    pub eta: f64,
    pub eta_is_estimate: bool,
    pub theta: f64,
    /// Root-sum-square of the dropped singular values.
    pub discarded_tail: f64,
    /// `‖Ŷ1 − Y1‖_F` evaluated from the reconstructed cores.
    pub truncation_error: f64,
    /// `‖Ŝ‖_F` of the accepted augmented core.
    pub core_norm: f64,
    pub retries: usize,
    /// Reason for each rejected attempt, in order.
    pub rejections: Vec<RejectionReason>,
    /// The rank cap kept a rejection from growing the rank, or forced a
    /// truncation above the tolerance.
    pub rank_capped: bool,
    pub timings: PhaseTimings,
}

/// Rounding allowance, relative to `‖Ŝ‖_F`, when comparing the truncation
/// error with `ϑ`.
pub const TRUNCATION_SLACK: f64 = 1e-12;

fn bits_eq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl StepResult {
    /// `‖Ŷ1 − Y1‖_F ≤ ϑ` up to rounding in the core, or the rank cap forced
    /// a coarser truncation.
    pub fn truncation_within_tolerance(&self) -> bool {
        self.rank_capped || self.truncation_error <= self.theta + TRUNCATION_SLACK * self.core_norm
    }

    /// Bitwise equality of every field except the timings.
    pub fn same_numbers(&self, other: &Self) -> bool {
        bits_eq(self.y1.u(), other.y1.u())
            && bits_eq(self.y1.s(), other.y1.s())
            && bits_eq(self.y1.v(), other.y1.v())
            && self.rank_out == other.rank_out
            && self.working_rank == other.working_rank
            && self.augmented_ranks == other.augmented_ranks
            && self.eta.to_bits() == other.eta.to_bits()
            && self.eta_is_estimate == other.eta_is_estimate
            && self.theta.to_bits() == other.theta.to_bits()
            && self.discarded_tail.to_bits() == other.discarded_tail.to_bits()
            && self.truncation_error.to_bits() == other.truncation_error.to_bits()
            && self.core_norm.to_bits() == other.core_norm.to_bits()
            && self.retries == other.retries
            && self.rejections == other.rejections
            && self.rank_capped == other.rank_capped
    }
}

/// Which integrator advances the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Stepper {
    #[default]
    Parallel,
    ParallelSerialS11,
    Bug,
}

impl Stepper {
    pub fn step<O: RhsOperator + ?Sized>(
        self,
        op: &O,
        y0: &FactoredMatrix,
        t0: f64,
        t1: f64,
        cfg: &StepConfig,
    ) -> Result<StepResult> {
        match self {
            Stepper::Parallel => parallel_step(op, y0, t0, t1, cfg),
            Stepper::ParallelSerialS11 => parallel_serial_s11_step(op, y0, t0, t1, cfg),
            Stepper::Bug => bug_step(op, y0, t0, t1, cfg),
        }
    }
}

impl fmt::Display for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stepper::Parallel => "parallel",
            Stepper::ParallelSerialS11 => "parallel_serial_s11",
            Stepper::Bug => "bug",
        })
    }
}

impl FromStr for Stepper {
    type Err = DlraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" => Ok(Stepper::Parallel),
            "parallel_serial_s11" => Ok(Stepper::ParallelSerialS11),
            "bug" => Ok(Stepper::Bug),
            other => Err(DlraError::InvalidInput(format!("unknown integrator '{other}'"))),
        }
    }
}

/// One step of the parallel integrator: K, L and S̄ are solved concurrently
/// from the same starting data, then the augmented core
/// `[[S̄, S1L], [S1K, 0]]` is truncated.
pub fn parallel_step<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<StepResult> {
    step_with_rejection(op, y0, t0, t1, cfg, Stepper::Parallel)
}

/// [`parallel_step`] with the lower-right block of the augmented core set to
/// `h Ũ1ᵀ F(t0, Y0) Ṽ1`.
pub fn parallel_serial_s11_step<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<StepResult> {
    step_with_rejection(op, y0, t0, t1, cfg, Stepper::ParallelSerialS11)
}

/// One step of the rank-adaptive BUG integrator: K and L concurrently, then
/// the Galerkin step on the augmented bases.
pub fn bug_step<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
) -> Result<StepResult> {
    step_with_rejection(op, y0, t0, t1, cfg, Stepper::Bug)
}

struct Attempt {
    y1: FactoredMatrix,
    u_hat: AugmentedBasis,
    v_hat: AugmentedBasis,
    cores: TruncationCores,
    theta: f64,
    eta: EtaEstimate,
    truncation_error: f64,
    core_norm: f64,
    timings: PhaseTimings,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn attempt<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
    r_max: usize,
    kind: Stepper,
) -> Result<Attempt> {
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let k_task = || timed(|| k_step(op, y0, t0, t1, cfg));
    let l_task = || timed(|| l_step(op, y0, t0, t1, cfg));

    let (s_hat, u_hat, v_hat, eta) = match kind {
        Stepper::Parallel | Stepper::ParallelSerialS11 => {
            let s_task = || timed(|| s_step_parallel(op, y0, t0, t1, cfg));
            let ((k, tk), (l, tl), (s_bar, ts)) = run_three(cfg.schedule, k_task, l_task, s_task);
            timings.k = tk;
            timings.l = tl;
            timings.s = ts;
            let ((k1, u_hat), (l1, v_hat), s_bar) = (k?, l?, s_bar?);
            let merge = Instant::now();
            let ut = u_hat.new_directions();
            let vt = v_hat.new_directions();
            let mut s_hat = assemble_parallel_s1(&s_bar, &ut.tr_mul(&k1), &l1.tr_mul(&vt))?;
            let eta = compute_eta(op, t0, y0, &ut, &vt, cfg.eta_columns)?;
            if kind == Stepper::ParallelSerialS11 {
                let full = if eta.estimate {
                    compute_eta(op, t0, y0, &ut, &vt, super::config::EtaColumns::All)?.block
                } else {
                    eta.block.clone()
                };
                let r = y0.rank();
                s_hat.view_mut((r, r), full.shape()).copy_from(&(full * (t1 - t0)));
            }
            timings.merge = merge.elapsed();
            (s_hat, u_hat, v_hat, eta)
        }
        Stepper::Bug => {
            let ((k, tk), (l, tl)) = run_two(cfg.schedule, k_task, l_task);
            timings.k = tk;
            timings.l = tl;
            let ((_, u_hat), (_, v_hat)) = (k?, l?);
            let (s_hat, ts) = timed(|| s_step_bug(op, y0, &u_hat, &v_hat, t0, t1, cfg));
            timings.s = ts;
            let s_hat = s_hat?;
            let merge = Instant::now();
            let eta = compute_eta(
                op,
                t0,
                y0,
                &u_hat.new_directions(),
                &v_hat.new_directions(),
                cfg.eta_columns,
            )?;
            timings.merge = merge.elapsed();
            (s_hat, u_hat, v_hat, eta)
        }
    };

    let merge = Instant::now();
    let core_norm = s_hat.norm();
    let theta = cfg.theta(core_norm);
    let cores = truncate_svd_capped(&s_hat, theta, 1, r_max)?;
    let y1 = assemble_truncated(&u_hat, &v_hat, &cores)?;
    let kept = &cores.p1 * cores.s1() * cores.q1.transpose();
    let truncation_error = (&s_hat - kept).norm();
    timings.merge += merge.elapsed();
    timings.total = start.elapsed();
    Ok(Attempt {
        y1,
        u_hat,
        v_hat,
        cores,
        theta,
        eta,
        truncation_error,
        core_norm,
        timings,
    })
}

fn step_with_rejection<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t1: f64,
    cfg: &StepConfig,
    kind: Stepper,
) -> Result<StepResult> {
    cfg.validate()?;
    check_dims("step input", op.shape(), y0.shape())?;
    if !(t1 > t0) {
        return Err(DlraError::InvalidInput(format!(
            "step needs t1 > t0, got t0 = {t0}, t1 = {t1}"
        )));
    }
    let (m, n) = y0.shape();
    let r_max = cfg.effective_r_max(m, n);
    let h = t1 - t0;
    let mut y = y0.clone();
    let mut rejections = Vec::new();
    let mut timings = PhaseTimings::default();
    loop {
        let a = attempt(op, &y, t0, t1, cfg, r_max, kind)?;
        timings += a.timings;
        let r_in = y.rank();
        let r_hat = a.u_hat.effective_rank().min(a.v_hat.effective_rank());
        let sv = &a.cores.singular_values;
        let untruncated = sv[r_hat - 1] > a.theta;
        let minimal = if untruncated { r_hat } else { a.cores.rank };
        let mut rank_capped = a.cores.tail > a.theta;
        let verdict = check_rejection(r_in, minimal, r_hat, h, a.eta.eta, a.theta, cfg);
        let mut accept = verdict == Verdict::Accept;
        let grow_to = r_hat.min(r_max);
        if let Verdict::Reject(reason) = verdict {
            if grow_to <= r_in {
                rank_capped = true;
                accept = true;
            } else if rejections.len() == cfg.max_retries {
                return Err(DlraError::RetriesExhausted {
                    retries: rejections.len(),
                    rank: r_in,
                    eta: a.eta.eta,
                    theta: a.theta,
                });
            } else {
                rejections.push(reason);
            }
        }
        if accept {
            let result = StepResult {
                rank_out: a.y1.rank(),
                y1: a.y1,
                working_rank: r_in,
                augmented_ranks: (a.u_hat.effective_rank(), a.v_hat.effective_rank()),
                eta: a.eta.eta,
                eta_is_estimate: a.eta.estimate,
                theta: a.theta,
                discarded_tail: a.cores.tail,
                truncation_error: a.truncation_error,
                core_norm: a.core_norm,
                retries: rejections.len(),
                rejections,
                rank_capped,
                timings,
            };
            debug_assert!(
                result.truncation_within_tolerance(),
                "truncation error {} exceeds theta {} (tail {}, core norm {}, singular values {:?})",
                result.truncation_error,
                result.theta,
                result.discarded_tail,
                result.core_norm,
                a.cores.singular_values
            );
            return Ok(result);
        }
        // Restart from the same matrix written in the augmented bases.
        let u = a.u_hat.b_hat().columns(0, grow_to).into_owned();
        let v = a.v_hat.b_hat().columns(0, grow_to).into_owned();
        y = FactoredMatrix::from_parts(u, pad_block(y.s(), grow_to, grow_to), v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::config::{EtaColumns, Schedule, Substep, ThetaMode};
    use crate::lowrank::{frobenius_distance, random_orthonormal};
    use crate::planesource::{PlanesourceConfig, PlanesourceProblem};
    use crate::rhs::{dense_reference_solve, sylvester_benchmark, ScaledIdentity, TangentialProblem, ZeroRhs};
    use crate::substep::{MethodKind, OdeMethod};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    const ALL: [Stepper; 3] = [Stepper::Parallel, Stepper::ParallelSerialS11, Stepper::Bug];

    #[test]
    fn zero_field_returns_input() {
        let y0 = FactoredMatrix::random(&mut rng(1), 20, 15, &[3.0, 1.0, 0.2]).unwrap();
        let op = ZeroRhs { m: 20, n: 15 };
        let cfg = StepConfig {
            method: OdeMethod::rk4(1),
            ..StepConfig::default()
        };
        for kind in ALL {
            let res = kind.step(&op, &y0, 0.0, 0.1, &cfg).unwrap();
            assert!(frobenius_distance(&res.y1, &y0).unwrap() < 1e-12, "{kind}");
            assert_eq!(res.rank_out, 3);
            assert_eq!(res.retries, 0);
            assert_eq!(res.eta, 0.0);
        }
    }

    #[test]
    fn parse_round_trip() {
        for kind in ALL {
            assert_eq!(kind.to_string().parse::<Stepper>().unwrap(), kind);
        }
        assert!("projector".parse::<Stepper>().is_err());
    }

    #[test]
    fn tangential_one_step_error_is_second_order() {
        let tp = TangentialProblem::random(&mut rng(2), 40, 30, &[1.0, 0.3, 0.05], 1.0, 0.5).unwrap();
        let cfg = StepConfig::fixed_tolerance(0.0, OdeMethod::rk4(4));
        let err = |h: f64| {
            let res = parallel_step(&tp, &tp.exact(0.0), 0.0, h, &cfg).unwrap();
            frobenius_distance(&res.y1, &tp.exact(h)).unwrap()
        };
        let order = (err(1.0 / 32.0) / err(1.0 / 64.0)).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn sylvester_step_matches_dense_oracle() {
        let (op, y0) = sylvester_benchmark(&mut rng(3), 100, 6, 3).unwrap();
        let cfg = StepConfig {
            theta_bar: 1e-6,
            method: OdeMethod::rk4(1),
            ..StepConfig::default()
        };
        let h = 1e-2;
        let res = parallel_step(&op, &y0, 0.0, h, &cfg).unwrap();
        let dense = dense_reference_solve(&op, &y0.to_dense(), 0.0, h, h / 10.0, MethodKind::Rk4).unwrap();
        assert!((res.y1.to_dense() - dense).norm() <= 1e-3);
    }

    #[test]
    fn serial_s11_agrees_on_tangential_field() {
        let tp = TangentialProblem::random(&mut rng(4), 30, 30, &[1.0, 0.5], 2.0, 0.1).unwrap();
        let cfg = StepConfig::fixed_tolerance(1e-12, OdeMethod::rk4(2));
        let a = parallel_step(&tp, &tp.exact(0.1), 0.1, 0.15, &cfg).unwrap();
        let b = parallel_serial_s11_step(&tp, &tp.exact(0.1), 0.1, 0.15, &cfg).unwrap();
        assert!(frobenius_distance(&a.y1, &b.y1).unwrap() < 1e-10);
    }

    #[test]
    fn serial_s11_adds_the_projected_field() {
        let (op, y0) = sylvester_benchmark(&mut rng(5), 30, 3, 2).unwrap();
        let cfg = StepConfig::fixed_tolerance(0.0, OdeMethod::rk4(1));
        let (t0, t1) = (0.0, 0.05);
        let a = parallel_step(&op, &y0, t0, t1, &cfg).unwrap();
        let b = parallel_serial_s11_step(&op, &y0, t0, t1, &cfg).unwrap();
        let (_, u_hat) = k_step(&op, &y0, t0, t1, &cfg).unwrap();
        let (_, v_hat) = l_step(&op, &y0, t0, t1, &cfg).unwrap();
        let (ut, vt) = (u_hat.new_directions(), v_hat.new_directions());
        let f0 = op.dense_eval(t0, &y0.to_dense());
        let correction = &ut * (ut.transpose() * &f0 * &vt * (t1 - t0)) * vt.transpose();
        let diff = b.y1.to_dense() - a.y1.to_dense();
        assert!((diff - &correction).norm() <= 1e-10 * correction.norm().max(1e-300));
        assert!(correction.norm() > 0.0);
    }

    #[test]
    fn bug_is_exact_for_rank_r_paths() {
        let tp = TangentialProblem::random(&mut rng(6), 40, 30, &[1.0, 0.2, 0.01], 1.0, 0.4).unwrap();
        let cfg = StepConfig::fixed_tolerance(0.0, OdeMethod::rk4(50));
        let h = 0.1;
        let res = bug_step(&tp, &tp.exact(0.0), 0.0, h, &cfg).unwrap();
        let err = frobenius_distance(&res.y1, &tp.exact(h)).unwrap();
        assert!(err <= 1e-8, "bug error {err}");
    }

    #[test]
    fn bug_and_parallel_gap_shrinks_quadratically() {
        // Without a source the field is tangential: ε = 0.
        let (op, y0) = sylvester_benchmark(&mut rng(7), 40, 4, 0).unwrap();
        let cfg = StepConfig::fixed_tolerance(0.0, OdeMethod::rk4(2));
        let gap = |h: f64| {
            let a = parallel_step(&op, &y0, 0.0, h, &cfg).unwrap();
            let b = bug_step(&op, &y0, 0.0, h, &cfg).unwrap();
            frobenius_distance(&a.y1, &b.y1).unwrap()
        };
        let order = (gap(1.0 / 64.0) / gap(1.0 / 128.0)).log2();
        assert!(order >= 1.8, "order {order}");
    }

    #[test]
    fn gauge_invariance() {
        let mut r = rng(8);
        let (op, y0) = sylvester_benchmark(&mut r, 30, 4, 2).unwrap();
        let cfg = StepConfig {
            theta_bar: 1e-8,
            theta_mode: ThetaMode::Absolute,
            ..StepConfig::default()
        };
        let base = parallel_step(&op, &y0, 0.0, 0.02, &cfg).unwrap().y1.to_dense();
        for _ in 0..5 {
            let q = random_orthonormal(&mut r, 4, 4);
            let p = random_orthonormal(&mut r, 4, 4);
            let y = y0.regauge(&q, &p).unwrap();
            let out = parallel_step(&op, &y, 0.0, 0.02, &cfg).unwrap().y1.to_dense();
            assert!((out - &base).norm() <= 1e-10);
        }
    }

    #[test]
    fn completion_order_does_not_change_results() {
        use Substep::*;
        let (op, y0) = sylvester_benchmark(&mut rng(9), 30, 3, 2).unwrap();
        let base_cfg = StepConfig {
            theta_bar: 1e-3,
            ..StepConfig::default()
        };
        let reference = parallel_step(
            &op,
            &y0,
            0.0,
            0.05,
            &StepConfig {
                schedule: Schedule::Sequential,
                ..base_cfg
            },
        )
        .unwrap();
        for order in [[K, L, S], [S, L, K], [L, S, K]] {
            let cfg = StepConfig {
                schedule: Schedule::CompletionOrder(order),
                ..base_cfg
            };
            for kind in ALL {
                let a = kind.step(&op, &y0, 0.0, 0.05, &cfg).unwrap();
                let b = kind
                    .step(
                        &op,
                        &y0,
                        0.0,
                        0.05,
                        &StepConfig {
                            schedule: Schedule::Sequential,
                            ..base_cfg
                        },
                    )
                    .unwrap();
                assert!(a.same_numbers(&b), "{kind} {order:?}");
            }
        }
        assert!(reference.same_numbers(&reference.clone()));
    }

    #[test]
    fn criterion_one_doubles_rank_until_truncation() {
        // Rank-1 start for a field that immediately excites many directions.
        let problem = PlanesourceProblem::new(PlanesourceConfig {
            nx: 60,
            n_moments: 20,
            ..Default::default()
        })
        .unwrap();
        let y0 = problem.initial_condition();
        let cfg = StepConfig {
            method: OdeMethod::euler(1),
            ..StepConfig::default()
        };
        let h = problem.cfl_step_size();
        let res = parallel_step(&problem, &y0, 0.0, h, &cfg).unwrap();
        assert!(res.retries >= 1);
        assert!(res
            .rejections
            .iter()
            .all(|&r| r == RejectionReason::NoTruncation || r == RejectionReason::NormalComponent));
        assert!(res.working_rank > 1);
        assert!(res.rank_out <= 2 * res.working_rank);
        assert!(res.truncation_error <= res.theta * (1.0 + 1e-12));
    }

    #[test]
    fn rank_bound_and_cap() {
        let (op, y0) = sylvester_benchmark(&mut rng(10), 30, 3, 3).unwrap();
        let cfg = StepConfig {
            theta_bar: 0.0,
            r_max: Some(4),
            ..StepConfig::default()
        };
        for kind in ALL {
            let res = kind.step(&op, &y0, 0.0, 0.05, &cfg).unwrap();
            assert!(res.rank_out <= 4);
            assert!(res.rank_capped);
            assert!(res.rank_out <= 2 * res.working_rank);
        }
    }

    #[test]
    fn retries_exhausted_is_reported() {
        let (op, y0) = sylvester_benchmark(&mut rng(11), 30, 1, 3).unwrap();
        let cfg = StepConfig {
            theta_bar: 0.0,
            theta_mode: ThetaMode::Absolute,
            max_retries: 0,
            ..StepConfig::default()
        };
        let err = parallel_step(&op, &y0, 0.0, 0.05, &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                DlraError::RetriesExhausted {
                    retries: 0,
                    rank: 1,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn eta_subset_is_flagged() {
        let (op, y0) = sylvester_benchmark(&mut rng(12), 30, 4, 3).unwrap();
        let cfg = StepConfig {
            eta_columns: EtaColumns::Leading(1),
            rejection: false,
            ..StepConfig::default()
        };
        let res = parallel_step(&op, &y0, 0.0, 0.05, &cfg).unwrap();
        assert!(res.eta_is_estimate);
        let full = parallel_step(
            &op,
            &y0,
            0.0,
            0.05,
            &StepConfig {
                rejection: false,
                ..StepConfig::default()
            },
        )
        .unwrap();
        assert!(!full.eta_is_estimate);
        assert!(res.eta <= full.eta);
    }

    #[test]
    fn exponential_growth_with_identity_field() {
        let y0 = FactoredMatrix::random(&mut rng(13), 12, 10, &[1.0, 0.5]).unwrap();
        let op = ScaledIdentity {
            m: 12,
            n: 10,
            lambda: 1.0,
        };
        let cfg = StepConfig::fixed_tolerance(1e-12, OdeMethod::rk4(1));
        let res = parallel_step(&op, &y0, 0.0, 0.1, &cfg).unwrap();
        let expected = y0.to_dense() * (1.0f64 + 0.1 + 0.005 + 0.1f64.powi(3) / 6.0 + 0.1f64.powi(4) / 24.0);
        assert!((res.y1.to_dense() - expected).norm() < 1e-12);
        assert_eq!(res.rank_out, 2);
    }

    #[test]
    fn invalid_interval_rejected() {
        let y0 = FactoredMatrix::random(&mut rng(14), 8, 8, &[1.0]).unwrap();
        let op = ZeroRhs { m: 8, n: 8 };
        assert!(parallel_step(&op, &y0, 0.1, 0.1, &StepConfig::default()).is_err());
        assert!(bug_step(&ZeroRhs { m: 8, n: 7 }, &y0, 0.0, 0.1, &StepConfig::default()).is_err());
    }
}
