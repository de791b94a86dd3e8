//! The `run`, `compare` and `converge` operations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use dlra::integrators::{integrate_observed, time_grid, Trajectory};
use dlra::FactoredMatrix;
use nalgebra::DMatrix;

use crate::config::{ProblemKind, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::{self, fmt_f64, DiagnosticsWriter};
use crate::problem::Problem;

/// A finished run and where its files went.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub step_size: f64,
    pub trajectory: Trajectory,
    pub wall_clock: Duration,
}

fn secs(d: Duration) -> String {
    fmt_f64(d.as_secs_f64())
}

/// Integrates `problem` from `y0` and streams diagnostics into `out_dir`.
///
/// When a step fails, the rows written so far are flushed and a
/// `run_meta.txt` with `status = failed` is left behind before the error is
/// returned.
fn simulate(
    cfg: &RunConfig,
    problem: &Problem,
    y0: &FactoredMatrix,
    h: f64,
    out_dir: &Path,
) -> Result<(Trajectory, Duration)> {
    output::ensure_dir(out_dir)?;
    let step_cfg = cfg.step_config()?;
    let mut diag = DiagnosticsWriter::create(&out_dir.join(output::DIAGNOSTICS_FILE))?;
    let mut write_error: Option<HarnessError> = None;
    let start = Instant::now();
    let res = integrate_observed(
        problem.op(),
        y0,
        0.0,
        cfg.t_end,
        h,
        &step_cfg,
        cfg.integrator,
        &cfg.snapshot_times(),
        |rec, _| {
            if write_error.is_none() {
                if let Err(e) = diag.write(rec) {
                    write_error = Some(e);
                }
            }
        },
    );
    let wall = start.elapsed();
    diag.flush()?;
    if let Some(e) = write_error {
        return Err(e);
    }
    match res {
        Ok(traj) => Ok((traj, wall)),
        Err(e) => {
            let mut meta = meta_header(cfg, h);
            meta.push(("status".into(), "failed".into()));
            meta.push(("error".into(), e.to_string()));
            meta.push(("wall_clock_seconds".into(), secs(wall)));
            output::write_meta(&out_dir.join(output::RUN_META_FILE), &meta)?;
            Err(e.into())
        }
    }
}

fn meta_header(cfg: &RunConfig, h: f64) -> Vec<(String, String)> {
    let mut meta: Vec<(String, String)> = cfg
        .to_key_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    meta.push(("step_size".into(), fmt_f64(h)));
    meta
}

/// Runs one configuration and writes `diagnostics.csv`, `timings.csv`, one
/// snapshot file per requested time and `run_meta.txt` to `cfg.output_dir`.
///
/// Planesource snapshots are scalar-flux files; the other problems store the
/// singular values of the snapshot.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let (problem, y0) = Problem::build(cfg)?;
    let h = problem.step_size(cfg);
    let dir = cfg.output_dir.clone();
    let (traj, wall) = simulate(cfg, &problem, &y0, h, &dir)?;

    let mut meta = meta_header(cfg, h);
    meta.push(("status".into(), "ok".into()));
    meta.push(("steps".into(), traj.step_count().to_string()));
    meta.push(("partial_final_step".into(), traj.partial_final_step.to_string()));
    meta.push(("final_rank".into(), traj.final_state.rank().to_string()));
    let phases = traj.total_timings();
    meta.push(("wall_clock_seconds".into(), secs(wall)));
    meta.push(("k_seconds".into(), secs(phases.k)));
    meta.push(("l_seconds".into(), secs(phases.l)));
    meta.push(("s_seconds".into(), secs(phases.s)));
    meta.push(("merge_seconds".into(), secs(phases.merge)));
    meta.push(("step_seconds".into(), secs(phases.total)));

    for (i, snap) in traj.snapshots.iter().enumerate() {
        let file = match problem.flux(&snap.y)? {
            Some((x, phi)) => {
                let name = output::flux_file_name(snap.requested);
                output::write_flux(&dir.join(&name), &x, &phi)?;
                name
            }
            None => {
                let name = output::singular_values_file_name(snap.requested);
                output::write_singular_values(&dir.join(&name), &snap.y.singular_values())?;
                name
            }
        };
        meta.push((format!("snapshot.{i}.requested"), snap.requested.to_string()));
        meta.push((format!("snapshot.{i}.time"), fmt_f64(snap.time)));
        meta.push((format!("snapshot.{i}.step"), snap.step.to_string()));
        meta.push((format!("snapshot.{i}.file"), file));
    }
    output::write_timings(&dir.join(output::TIMINGS_FILE), &traj.records)?;
    output::write_meta(&dir.join(output::RUN_META_FILE), &meta)?;
    Ok(RunOutcome {
        config: cfg.clone(),
        step_size: h,
        trajectory: traj,
        wall_clock: wall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMetric {
    FluxL2Rel,
    DenseL2Rel,
}

impl fmt::Display for CompareMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareMetric::FluxL2Rel => "flux_l2_rel",
            CompareMetric::DenseL2Rel => "dense_l2_rel",
        })
    }
}

impl FromStr for CompareMetric {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flux_l2_rel" => Ok(CompareMetric::FluxL2Rel),
            "dense_l2_rel" => Ok(CompareMetric::DenseL2Rel),
            other => Err(HarnessError::config(
                "metric",
                format!("unknown metric '{other}' (flux_l2_rel, dense_l2_rel)"),
            )),
        }
    }
}

/// `‖a − b‖₂ / ‖b‖₂`, or the absolute distance when `b` vanishes.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

fn relative_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    relative_l2(a.as_slice(), b.as_slice())
}

/// Distances at one snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub requested: f64,
    pub time: f64,
    pub a_vs_b: f64,
    pub a_vs_reference: f64,
    pub b_vs_reference: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub metric: CompareMetric,
    pub rows: Vec<CompareRow>,
    pub a: RunOutcome,
    pub b: RunOutcome,
}

/// Runs `a` and `b` into `out_dir/a` and `out_dir/b` and writes per-snapshot
/// relative L2 distances, each run also measured against the reference
/// solution, to `out_dir/compare.csv`.
pub fn compare(a: &RunConfig, b: &RunConfig, metric: CompareMetric, out_dir: &Path) -> Result<CompareReport> {
    a.validate()?;
    b.validate()?;
    let (ka, kb) = (a.problem_keys(), b.problem_keys());
    if ka != kb {
        let diff: Vec<String> = ka
            .iter()
            .zip(&kb)
            .filter(|(x, y)| x != y)
            .map(|(x, y)| format!("{} ({} vs {})", x.0, x.1, y.1))
            .collect();
        let diff = if diff.is_empty() {
            "problem".to_string()
        } else {
            diff.join(", ")
        };
        return Err(HarnessError::MismatchedGrids(diff));
    }
    if metric == CompareMetric::FluxL2Rel && a.problem != ProblemKind::Planesource {
        return Err(HarnessError::config(
            "metric",
            "flux_l2_rel needs the planesource problem",
        ));
    }
    let with_dir = |cfg: &RunConfig, sub: &str| RunConfig {
        output_dir: out_dir.join(sub),
        ..cfg.clone()
    };
    let ra = run(&with_dir(a, "a"))?;
    let rb = run(&with_dir(b, "b"))?;

    let (problem, y0) = Problem::build(a)?;
    let (grid, _) = time_grid(0.0, a.t_end, ra.step_size)?;
    let mut steps: Vec<usize> = ra.trajectory.snapshots.iter().map(|s| s.step).collect();
    steps.dedup();
    let refs = problem.reference_states(a, &y0, &grid, &steps)?;
    let reference_for = |step: usize| &refs[steps.iter().position(|&s| s == step).expect("listed step")];

    let mut rows = Vec::new();
    for (sa, sb) in ra.trajectory.snapshots.iter().zip(&rb.trajectory.snapshots) {
        let reference = reference_for(sa.step);
        let (ya, yb) = (sa.y.to_dense(), sb.y.to_dense());
        let row = match metric {
            CompareMetric::DenseL2Rel => CompareRow {
                requested: sa.requested,
                time: sa.time,
                a_vs_b: relative_dense(&ya, &yb),
                a_vs_reference: relative_dense(&ya, reference),
                b_vs_reference: relative_dense(&yb, reference),
            },
            CompareMetric::FluxL2Rel => {
                let flux = |y: &DMatrix<f64>| -> Result<Vec<f64>> {
                    Ok(problem.flux_dense(y)?.expect("planesource has a flux"))
                };
                let (fa, fb, fr) = (flux(&ya)?, flux(&yb)?, flux(reference)?);
                CompareRow {
                    requested: sa.requested,
                    time: sa.time,
                    a_vs_b: relative_l2(&fa, &fb),
                    a_vs_reference: relative_l2(&fa, &fr),
                    b_vs_reference: relative_l2(&fb, &fr),
                }
            }
        };
        rows.push(row);
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.requested.to_string(),
                fmt_f64(r.time),
                fmt_f64(r.a_vs_b),
                fmt_f64(r.a_vs_reference),
                fmt_f64(r.b_vs_reference),
            ]
        })
        .collect();
    output::ensure_dir(out_dir)?;
    output::write_table(
        &out_dir.join(output::COMPARE_FILE),
        &["requested", "time", "a_vs_b", "a_vs_reference", "b_vs_reference"],
        &table,
    )?;
    Ok(CompareReport {
        metric,
        rows,
        a: ra,
        b: rb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaRule {
    /// `ϑ̄` as configured.
    Fixed,
    /// `ϑ̄ · h²`, so `ϑ/h → 0` linearly.
    HSquared,
}

impl fmt::Display for ThetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaRule::Fixed => "fixed",
            ThetaRule::HSquared => "h_squared",
        })
    }
}

impl FromStr for ThetaRule {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ThetaRule::Fixed),
            "h_squared" => Ok(ThetaRule::HSquared),
            other => Err(HarnessError::config(
                "theta_rule",
                format!("unknown rule '{other}' (fixed, h_squared)"),
            )),
        }
    }
}

impl ThetaRule {
    pub fn theta_bar(self, base: f64, h: f64) -> f64 {
        match self {
            ThetaRule::Fixed => base,
            ThetaRule::HSquared => base * h * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub theta: f64,
    /// `‖Y(t_end) − Y_ref(t_end)‖_F / ‖Y_ref(t_end)‖_F`.
    pub error: f64,
    pub steps: usize,
    pub final_rank: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rule: ThetaRule,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`; `None` with
    /// fewer than two usable rows.
    pub slope: Option<f64>,
}

/// Least-squares slope of `log y` against `log x` over the pairs with both
/// values positive and finite.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs `base` once per step size in `h_list` (strictly decreasing) and
/// measures the error at `t_end` against the reference solution. Each run
/// goes to `out_dir/h<index>`; the table goes to `out_dir/convergence.csv`.
///
/// Planesource runs use the listed step sizes instead of `cfl · Δx` and are
/// measured against the full moment system stepped on the same grid, so only
/// the low-rank error is seen. Sylvester is measured against one RK4 solve
/// on the finest grid, tangential against its closed form.
pub fn convergence_study(
    base: &RunConfig,
    h_list: &[f64],
    rule: ThetaRule,
    out_dir: &Path,
) -> Result<ConvergenceTable> {
    base.validate()?;
    if h_list.is_empty() {
        return Err(HarnessError::config("h_list", "needs at least one step size"));
    }
    if h_list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(HarnessError::config("h_list", "step sizes must be positive"));
    }
    if h_list.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Greater)) {
        return Err(HarnessError::config("h_list", "must be strictly decreasing"));
    }
    let (problem, y0) = Problem::build(base)?;

    let final_reference = |h: f64| -> Result<DMatrix<f64>> {
        let (grid, _) = time_grid(0.0, base.t_end, h).map_err(HarnessError::Oracle)?;
        let last = grid.len() - 1;
        Ok(problem.reference_states(base, &y0, &grid, &[last])?.remove(0))
    };
    let shared_reference = match problem {
        Problem::Planesource(_) => None,
        _ => Some(final_reference(*h_list.last().expect("nonempty"))?),
    };

    let mut rows = Vec::with_capacity(h_list.len());
    for (i, &h) in h_list.iter().enumerate() {
        let cfg = RunConfig {
            theta_bar: rule.theta_bar(base.theta_bar, h),
            h,
            snapshots: Some(Vec::new()),
            output_dir: out_dir.join(format!("h{i}")),
            ..base.clone()
        };
        let (traj, _) = simulate(&cfg, &problem, &y0, h, &cfg.output_dir)?;
        let reference = match &shared_reference {
            Some(r) => r.clone(),
            None => final_reference(h)?,
        };
        rows.push(ConvergenceRow {
            h,
            theta: cfg.theta_bar,
            error: relative_dense(&traj.final_state.to_dense(), &reference),
            steps: traj.step_count(),
            final_rank: traj.final_state.rank(),
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let slope = fit_loglog_slope(&hs, &errs);

    output::ensure_dir(out_dir)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.h),
                fmt_f64(r.theta),
                fmt_f64(r.error),
                r.steps.to_string(),
                r.final_rank.to_string(),
            ]
        })
        .collect();
    output::write_table(
        &out_dir.join(output::CONVERGENCE_FILE),
        &["h", "theta", "error", "steps", "final_rank"],
        &table,
    )?;
    let mut meta: Vec<(String, String)> = base
        .to_key_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    meta.push(("theta_rule".into(), rule.to_string()));
    meta.push(("slope".into(), slope.map_or_else(|| "none".to_string(), fmt_f64)));
    output::write_meta(&out_dir.join(output::CONVERGE_META_FILE), &meta)?;
    Ok(ConvergenceTable { rule, rows, slope })
}
