//! The outer time loop.

use super::config::StepConfig;
use super::stepper::{PhaseTimings, Stepper};
use super::steps::RejectionReason;
use crate::error::{check_dims, DlraError, Result};
use crate::lowrank::FactoredMatrix;
use crate::rhs::RhsOperator;

/// Relative slack when deciding whether `t_end − t0` is a whole number of steps.
const STEP_COUNT_RTOL: f64 = 1e-9;

/// Diagnostics of one step. Row 0 describes the initial value; its
/// step-specific fields are zero.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub h: f64,
    pub rank: usize,
    pub working_rank: usize,
    pub eta: f64,
    pub theta: f64,
    /// `c ϑ / h`, the threshold `η` is compared against.
    pub reject_bound: f64,
    /// `‖S‖_F`.
    pub norm: f64,
    pub retries: usize,
    /// Why each retry of this step was rejected, in order.
    pub rejections: Vec<RejectionReason>,
    pub tail: f64,
    pub truncation_error: f64,
    /// `‖Ŝ‖_F` of the accepted augmented core.
    pub core_norm: f64,
    pub rank_capped: bool,
    pub timings: PhaseTimings,
}

impl StepRecord {
    /// See [`StepResult::truncation_within_tolerance`](super::StepResult::truncation_within_tolerance).
    pub fn truncation_within_tolerance(&self) -> bool {
        self.rank_capped || self.truncation_error <= self.theta + super::stepper::TRUNCATION_SLACK * self.core_norm
    }
}

/// Solution at the completed step closest to a requested time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub requested: f64,
    pub time: f64,
    pub step: usize,
    pub y: FactoredMatrix,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: FactoredMatrix,
    /// The last step was shorter than `h` to land on `t_end`.
    pub partial_final_step: bool,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.rank).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eta).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.norm).collect()
    }

    pub fn retries(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.retries).collect()
    }

    /// Number of steps taken (records minus the initial row).
    pub fn step_count(&self) -> usize {
        self.records.len() - 1
    }

    pub fn total_timings(&self) -> PhaseTimings {
        let mut total = PhaseTimings::default();
        for r in &self.records {
            total += r.timings;
        }
        total
    }
}

/// Step grid `t0, t0 + h, …, t_end`; the last interval may be shorter.
pub fn time_grid(t0: f64, t_end: f64, h: f64) -> Result<(Vec<f64>, bool)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(DlraError::InvalidInput(format!("step size must be positive, got {h}")));
    }
    if !(t_end >= t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(DlraError::InvalidInput(format!(
            "need t_end >= t0, got t0 = {t0}, t_end = {t_end}"
        )));
    }
    let ratio = (t_end - t0) / h;
    let whole = (ratio + STEP_COUNT_RTOL).floor() as usize;
    let mut grid: Vec<f64> = (0..=whole).map(|k| t0 + k as f64 * h).collect();
    let partial = ratio - whole as f64 > STEP_COUNT_RTOL;
    if partial {
        grid.push(t_end);
    } else if let Some(last) = grid.last_mut() {
        // land exactly on t_end
        if whole > 0 {
            *last = t_end;
        }
    }
    Ok((grid, partial))
}

/// Advances `y0` from `t0` to `t_end` with steps of size `h`.
///
/// Snapshot times are matched to the nearest grid point; each requested time
/// must lie in `[t0, t_end]`.
#[allow(clippy::too_many_arguments)]
pub fn integrate<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t_end: f64,
    h: f64,
    cfg: &StepConfig,
    stepper: Stepper,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    integrate_observed(op, y0, t0, t_end, h, cfg, stepper, snapshot_times, |_, _| {})
}

/// [`integrate`] that also hands every record, including row 0, and the state
/// it describes to `observe` as soon as it exists. Records seen before a
/// failing step have already been observed when the error is returned.
#[allow(clippy::too_many_arguments)]
pub fn integrate_observed<O, F>(
    op: &O,
    y0: &FactoredMatrix,
    t0: f64,
    t_end: f64,
    h: f64,
    cfg: &StepConfig,
    stepper: Stepper,
    snapshot_times: &[f64],
    mut observe: F,
) -> Result<Trajectory>
where
    O: RhsOperator + ?Sized,
    F: FnMut(&StepRecord, &FactoredMatrix),
{
    cfg.validate()?;
    check_dims("integrate initial value", op.shape(), y0.shape())?;
    let (grid, partial) = time_grid(t0, t_end, h)?;
    let slack = STEP_COUNT_RTOL * h.max(t_end.abs()).max(1.0);
    let mut wanted: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for &ts in snapshot_times {
        if !(ts >= t0 - slack && ts <= t_end + slack) {
            return Err(DlraError::InvalidInput(format!(
                "snapshot time {ts} outside [{t0}, {t_end}]"
            )));
        }
        let nearest = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - ts).abs().total_cmp(&(b.1 - ts).abs()))
            .map(|(i, _)| i)
            .expect("grid is never empty");
        wanted[nearest].push(ts);
    }

    let mut records = Vec::with_capacity(grid.len());
    let mut snapshots = Vec::new();
    records.push(StepRecord {
        step: 0,
        t: t0,
        h: 0.0,
        rank: y0.rank(),
        working_rank: y0.rank(),
        eta: 0.0,
        theta: 0.0,
        reject_bound: 0.0,
        norm: y0.frobenius_norm(),
        retries: 0,
        rejections: Vec::new(),
        tail: 0.0,
        truncation_error: 0.0,
        core_norm: 0.0,
        rank_capped: false,
        timings: PhaseTimings::default(),
    });
    observe(&records[0], y0);
    let push_snapshots = |step: usize, t: f64, y: &FactoredMatrix, snapshots: &mut Vec<Snapshot>| {
        for &requested in &wanted[step] {
            snapshots.push(Snapshot {
                requested,
                time: t,
                step,
                y: y.clone(),
            });
        }
    };
    push_snapshots(0, t0, y0, &mut snapshots);

    let mut y = y0.clone();
    for (step, pair) in grid.windows(2).enumerate() {
        let (ta, tb) = (pair[0], pair[1]);
        let res = stepper.step(op, &y, ta, tb, cfg).map_err(|e| DlraError::StepFailed {
            step: step + 1,
            source: Box::new(e),
        })?;
        let hs = tb - ta;
        records.push(StepRecord {
            step: step + 1,
            t: tb,
            h: hs,
            rank: res.rank_out,
            working_rank: res.working_rank,
            eta: res.eta,
            theta: res.theta,
            reject_bound: cfg.c_reject * res.theta / hs,
            norm: res.y1.frobenius_norm(),
            retries: res.retries,
            rejections: res.rejections,
            tail: res.discarded_tail,
            truncation_error: res.truncation_error,
            core_norm: res.core_norm,
            rank_capped: res.rank_capped,
            timings: res.timings,
        });
        y = res.y1;
        observe(records.last().expect("just pushed"), &y);
        push_snapshots(step + 1, tb, &y, &mut snapshots);
    }
    snapshots.sort_by(|a, b| a.requested.total_cmp(&b.requested));
    Ok(Trajectory {
        records,
        snapshots,
        final_state: y,
        partial_final_step: partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhs::{sylvester_benchmark, ZeroRhs};
    use crate::substep::OdeMethod;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_shapes() {
        let (g, p) = time_grid(0.0, 1.0, 0.25).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(!p);
        let (g, p) = time_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(p);
        let (g, p) = time_grid(0.5, 0.5, 0.1).unwrap();
        assert_eq!(g, vec![0.5]);
        assert!(!p);
        // 1 / 0.0495 is not integral
        let (g, p) = time_grid(0.0, 1.0, 0.0495).unwrap();
        assert_eq!(g.len(), 22);
        assert!(p);
        assert!(time_grid(0.0, 1.0, 0.0).is_err());
        assert!(time_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn zero_steps() {
        let y0 = FactoredMatrix::random(&mut ChaCha8Rng::seed_from_u64(1), 10, 8, &[1.0, 0.1]).unwrap();
        let op = ZeroRhs { m: 10, n: 8 };
        let traj = integrate(
            &op,
            &y0,
            0.3,
            0.3,
            0.1,
            &StepConfig::default(),
            Stepper::Parallel,
            &[0.3],
        )
        .unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.final_state, y0);
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.step_count(), 0);
    }

    #[test]
    fn sylvester_run_records_every_step() {
        let (op, y0) = sylvester_benchmark(&mut ChaCha8Rng::seed_from_u64(2), 30, 3, 2).unwrap();
        let cfg = StepConfig {
            theta_bar: 1e-6,
            method: OdeMethod::rk4(1),
            ..StepConfig::default()
        };
        let traj = integrate(
            &op,
            &y0,
            0.0,
            0.5,
            1.0 / 64.0 * 8.0,
            &cfg,
            Stepper::Parallel,
            &[0.1, 0.5],
        )
        .unwrap();
        assert_eq!(traj.records.len(), traj.times().len());
        assert_eq!(traj.ranks().len(), traj.etas().len());
        assert_eq!(traj.norms().len(), traj.retries().len());
        assert!((traj.records.last().unwrap().t - 0.5).abs() < 1e-15);
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[0].time, 0.125);
        assert_eq!(traj.snapshots[1].step, traj.step_count());
        assert_eq!(traj.snapshots[1].y, traj.final_state);
        for r in &traj.records[1..] {
            assert!(r.truncation_within_tolerance());
            assert!(r.reject_bound > 0.0);
            assert_eq!(r.retries, r.rejections.len());
        }
    }

    #[test]
    fn observer_sees_records_before_failure() {
        let (op, y0) = sylvester_benchmark(&mut ChaCha8Rng::seed_from_u64(4), 20, 3, 2).unwrap();
        let mut seen = Vec::new();
        let traj = integrate_observed(
            &op,
            &y0,
            0.0,
            0.5,
            0.125,
            &StepConfig::default(),
            Stepper::Parallel,
            &[],
            |r, y| seen.push((r.step, r.rank, y.rank())),
        )
        .unwrap();
        assert_eq!(seen.len(), traj.records.len());
        for ((step, rank, yr), rec) in seen.iter().zip(&traj.records) {
            assert_eq!(*step, rec.step);
            assert_eq!(rank, yr);
        }

        // max_retries = 0 with a rank-1 start forces a criterion-1 failure
        let cfg = StepConfig {
            max_retries: 0,
            ..StepConfig::default()
        };
        let mut count = 0;
        let res = integrate_observed(
            &op,
            &FactoredMatrix::from_dense(&y0.to_dense(), 1).unwrap(),
            0.0,
            0.5,
            0.125,
            &cfg,
            Stepper::Parallel,
            &[],
            |_, _| count += 1,
        );
        if let Err(e) = res {
            assert!(matches!(e, DlraError::StepFailed { .. }));
            assert!(count >= 1);
        }
    }

    #[test]
    fn snapshot_out_of_range_is_error() {
        let y0 = FactoredMatrix::random(&mut ChaCha8Rng::seed_from_u64(3), 6, 6, &[1.0]).unwrap();
        let op = ZeroRhs { m: 6, n: 6 };
        assert!(integrate(&op, &y0, 0.0, 1.0, 0.5, &StepConfig::default(), Stepper::Bug, &[1.5]).is_err());
    }
}
