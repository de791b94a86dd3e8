//! End-to-end runs through the public API only.

use dlra::rhs::{dense_reference_solve, sylvester_benchmark};
use dlra::{
    integrate, DlraError, MethodKind, OdeMethod, PlanesourceConfig, PlanesourceProblem, RhsOperator, StepConfig,
    Stepper, ThetaMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEPPERS: [Stepper; 3] = [Stepper::Parallel, Stepper::ParallelSerialS11, Stepper::Bug];

#[test]
fn sylvester_runs_track_the_dense_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (op, y0) = sylvester_benchmark(&mut rng, 40, 3, 2).unwrap();
    let h = 1.0 / 32.0;
    let cfg = StepConfig {
        theta_bar: 1e-2 * h * h,
        theta_mode: ThetaMode::Absolute,
        method: OdeMethod::rk4(1),
        ..StepConfig::default()
    };
    let exact = dense_reference_solve(&op, &y0.to_dense(), 0.0, 0.5, h / 8.0, MethodKind::Rk4).unwrap();
    for stepper in STEPPERS {
        let traj = integrate(&op, &y0, 0.0, 0.5, h, &cfg, stepper, &[0.25, 0.5]).unwrap();
        assert_eq!(traj.step_count(), 16);
        assert_eq!(traj.snapshots.len(), 2);
        let err = (traj.final_state.to_dense() - &exact).norm() / exact.norm();
        assert!(err < 5e-3, "{stepper}: {err}");
        assert!(traj.final_state.rank() <= 40);
    }
}

#[test]
fn small_planesource_is_stable() {
    let p = PlanesourceProblem::new(PlanesourceConfig {
        nx: 40,
        n_moments: 10,
        ..PlanesourceConfig::default()
    })
    .unwrap();
    let y0 = p.initial_condition_with_rank(2).unwrap();
    let h = p.cfl_step_size();
    let cfg = StepConfig::default();
    for stepper in STEPPERS {
        let traj = integrate(&p, &y0, 0.0, 0.5, h, &cfg, stepper, &[]).unwrap();
        for w in traj.records.windows(2) {
            assert!(w[1].norm <= w[0].norm * (1.0 + 1e-12), "{stepper} step {}", w[1].step);
        }
        let phi = p.scalar_flux(&traj.final_state, 0.5).unwrap();
        assert!(phi.values.iter().all(|v| v.is_finite()));
        assert_eq!(p.shape(), traj.final_state.shape());
    }
}

#[test]
fn invalid_step_size_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (op, y0) = sylvester_benchmark(&mut rng, 10, 2, 1).unwrap();
    let res = integrate(&op, &y0, 0.0, 1.0, 0.0, &StepConfig::default(), Stepper::Parallel, &[]);
    assert!(matches!(res, Err(DlraError::InvalidInput(_))));
}
