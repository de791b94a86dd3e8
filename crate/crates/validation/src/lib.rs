//! Shared setup for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion prints one line, `criterion N PASS|FAIL  title: detail`,
//! straight to stderr so it shows up even when test output is captured.

use std::io::Write;

use dlra::integrators::{RejectionReason, Trajectory};
use dlra::{FactoredMatrix, PlanesourceProblem, StepConfig};
use dlra_harness::{Problem, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Steps counted as the initial rank-growth phase of the desk run (`t ≤ 0.25`
/// at the CFL step size of the default grid).
pub const INITIAL_GROWTH_STEPS: usize = 5;

pub fn report(id: &str, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:<2} {verdict}  {title}: {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Desk planesource: 200 cells, 100 moments, CFL 0.99, relative `ϑ̄ = 10⁻²`,
/// `c = 1`, `t_end = 1`, forward Euler substeps.
pub fn desk_config() -> RunConfig {
    RunConfig::default()
}

/// Desk problem, its initial value at the given rank, the CFL step size and
/// the step configuration.
pub fn desk_problem(initial_rank: usize) -> (PlanesourceProblem, FactoredMatrix, f64, StepConfig) {
    let cfg = RunConfig {
        initial_rank,
        ..desk_config()
    };
    let (problem, y0) = Problem::build(&cfg).expect("desk problem builds");
    let Problem::Planesource(p) = problem else {
        unreachable!("default problem is planesource")
    };
    let h = p.cfl_step_size();
    (p, y0, h, cfg.step_config().expect("default config is valid"))
}

/// Geometric mean of `error / h²`.
pub fn second_order_constant(hs: &[f64], errs: &[f64]) -> f64 {
    let logs: f64 = hs.iter().zip(errs).map(|(h, e)| (e / (h * h)).ln()).sum();
    (logs / hs.len() as f64).exp()
}

/// Steps after the initial growth phase that were retried for the normal
/// component, and accepted steps there with `h η > c ϑ`.
pub fn late_normal_rejections(traj: &Trajectory, c: f64) -> (Vec<usize>, Vec<usize>) {
    let late = || traj.records[1..].iter().filter(|r| r.step > INITIAL_GROWTH_STEPS);
    let rejected = late()
        .filter(|r| r.rejections.contains(&RejectionReason::NormalComponent))
        .map(|r| r.step)
        .collect();
    let above = late()
        .filter(|r| !r.rank_capped && r.h * r.eta > c * r.theta * (1.0 + 1e-12))
        .map(|r| r.step)
        .collect();
    (rejected, above)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_constant_of_exact_quadratic() {
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((second_order_constant(&hs, &errs) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn desk_step_size_is_cfl_limited() {
        let (p, y0, h, _) = desk_problem(2);
        assert_eq!(y0.rank(), 2);
        assert!((h - 0.99 * p.dx()).abs() < 1e-15);
    }
}
