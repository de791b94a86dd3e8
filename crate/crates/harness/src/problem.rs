//! Problem construction from a [`RunConfig`] and the matching reference
//! solutions.

use dlra::rhs::{dense_reference_solve, sylvester_benchmark};
use dlra::{
    FactoredMatrix, MethodKind, PlanesourceConfig, PlanesourceProblem, RhsOperator, SylvesterProblem, TangentialProblem,
};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ProblemKind, RunConfig};
use crate::error::{HarnessError, Result};

/// RK4 substeps per grid interval in the sylvester reference solve.
pub const SYLVESTER_ORACLE_SUBSTEPS: usize = 8;

/// Angular rate and growth rate scale of the tangential path.
const TANGENTIAL_OMEGA: f64 = 1.0;
const TANGENTIAL_GROWTH: f64 = 0.5;

#[derive(Debug, Clone)]
pub enum Problem {
    Planesource(PlanesourceProblem),
    Sylvester(SylvesterProblem),
    Tangential(TangentialProblem),
}

/// Singular values `1, 10⁻¹, …` of length `rank`.
pub fn decaying_spectrum(rank: usize) -> Vec<f64> {
    (0..rank).map(|j| 10f64.powi(-(j as i32))).collect()
}

impl Problem {
    /// Builds the problem and its initial value. Randomized setups draw from
    /// a ChaCha stream seeded with `cfg.seed`.
    pub fn build(cfg: &RunConfig) -> Result<(Problem, FactoredMatrix)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(match cfg.problem {
            ProblemKind::Planesource => {
                let p = PlanesourceProblem::new(PlanesourceConfig {
                    nx: cfg.nx,
                    n_moments: cfg.nmoments,
                    cfl: cfg.cfl,
                    ..PlanesourceConfig::default()
                })?;
                let y0 = p.initial_condition_with_rank(cfg.initial_rank)?;
                (Problem::Planesource(p), y0)
            }
            ProblemKind::Sylvester => {
                let (p, y0) = sylvester_benchmark(&mut rng, cfg.size, cfg.initial_rank, cfg.source_rank)?;
                (Problem::Sylvester(p), y0)
            }
            ProblemKind::Tangential => {
                let p = TangentialProblem::random(
                    &mut rng,
                    cfg.size,
                    cfg.size,
                    &decaying_spectrum(cfg.initial_rank),
                    TANGENTIAL_OMEGA,
                    TANGENTIAL_GROWTH,
                )?;
                let y0 = p.exact(0.0);
                (Problem::Tangential(p), y0)
            }
        })
    }

    pub fn op(&self) -> &dyn RhsOperator {
        match self {
            Problem::Planesource(p) => p,
            Problem::Sylvester(p) => p,
            Problem::Tangential(p) => p,
        }
    }

    /// `cfl · Δx` for planesource, `cfg.h` otherwise.
    pub fn step_size(&self, cfg: &RunConfig) -> f64 {
        match self {
            Problem::Planesource(p) => p.cfl_step_size(),
            _ => cfg.h,
        }
    }

    pub fn planesource(&self) -> Option<&PlanesourceProblem> {
        match self {
            Problem::Planesource(p) => Some(p),
            _ => None,
        }
    }

    /// Cell midpoints and scalar flux, planesource only.
    pub fn flux(&self, y: &FactoredMatrix) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        match self {
            Problem::Planesource(p) => {
                let phi = p.scalar_flux(y, 0.0)?;
                Ok(Some((p.midpoints(), phi.values.iter().copied().collect())))
            }
            _ => Ok(None),
        }
    }

    pub fn flux_dense(&self, y: &DMatrix<f64>) -> Result<Option<Vec<f64>>> {
        match self {
            Problem::Planesource(p) => Ok(Some(p.scalar_flux_dense(y, 0.0)?.values.iter().copied().collect())),
            _ => Ok(None),
        }
    }

    /// Reference solution at the grid indices in `wanted` (ascending).
    ///
    /// Planesource steps the full moment system with the configured substep
    /// method on the same grid, sylvester uses RK4 with
    /// [`SYLVESTER_ORACLE_SUBSTEPS`] substeps per interval and tangential
    /// evaluates its closed form.
    pub fn reference_states(
        &self,
        cfg: &RunConfig,
        y0: &FactoredMatrix,
        grid: &[f64],
        wanted: &[usize],
    ) -> Result<Vec<DMatrix<f64>>> {
        if let Problem::Tangential(p) = self {
            return Ok(wanted.iter().map(|&i| p.exact(grid[i]).to_dense()).collect());
        }
        let (kind, substeps) = match self {
            Problem::Planesource(_) => (cfg.substep_method, cfg.substep_count),
            _ => (MethodKind::Rk4, SYLVESTER_ORACLE_SUBSTEPS),
        };
        let mut out = Vec::with_capacity(wanted.len());
        let mut y = y0.to_dense();
        let mut at = 0;
        for &target in wanted {
            while at < target {
                let (ta, tb) = (grid[at], grid[at + 1]);
                y = dense_reference_solve(self.op(), &y, ta, tb, (tb - ta) / substeps as f64, kind)
                    .map_err(HarnessError::Oracle)?;
                at += 1;
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}
