//! Slab-geometry radiative transfer (plane-source benchmark) in a P_N moment
//! discretization with normalized Legendre polynomials and an upwind
//! finite-volume discretization in space.
//!
//! The semi-discrete system is the matrix ODE
//!
//! ```text
//! Ẏ = −D_x Y Aᵀ + D_xx Y |A|ᵀ − Y G,      Y ∈ R^{Nx×N}
//! ```
//!
//! where row `j` of `Y` holds the moments in cell `j`, `A` is the flux
//! matrix, `|A|` its absolute value and `G = diag(0, 1, …, 1)` removes every
//! moment but the zeroth by isotropic scattering.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dims, DlraError, Result};
use crate::lowrank::{hstack, orthonormalize_augment, FactoredMatrix};
use crate::rhs::RhsOperator;

/// `∫ p₀ dμ` for the normalized Legendre polynomial `p₀ = 1/√2`.
pub const ZEROTH_MOMENT_WEIGHT: f64 = std::f64::consts::SQRT_2;

/// Singular value carried by padding directions in
/// [`PlanesourceProblem::initial_condition_with_rank`].
pub const SEED_SINGULAR_VALUE: f64 = 1e-14;

/// Gaussian pulse `f(0, x)` of the benchmark.
pub fn initial_pulse(x: f64) -> f64 {
    let sigma = 3e-2;
    (-(x * x) / (18e-4)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Square tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// `T[i+1, i]`, length `n − 1`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// `T[i, i+1]`, length `n − 1`.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    /// `T X`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.size();
        assert_eq!(x.nrows(), n, "tridiagonal apply: row mismatch");
        let mut out = DMatrix::zeros(n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..n {
                let mut acc = self.diag[i] * col[i];
                if i > 0 {
                    acc += self.lower[i - 1] * col[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * col[i + 1];
                }
                dst[i] = acc;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self {
            lower: self.upper.clone(),
            diag: self.diag.clone(),
            upper: self.lower.clone(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = self.diag[i];
            if i + 1 < n {
                out[(i + 1, i)] = self.lower[i];
                out[(i, i + 1)] = self.upper[i];
            }
        }
        out
    }
}

/// Flux matrix `a_{ℓk} = ∫ μ p_ℓ p_k dμ` for normalized Legendre polynomials:
/// symmetric tridiagonal with `a_{ℓ,ℓ+1} = (ℓ+1)/√((2ℓ+1)(2ℓ+3))`.
pub fn build_flux_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(DlraError::InvalidInput(format!("need at least 2 moments, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for l in 0..n - 1 {
        let lf = l as f64;
        let v = (lf + 1.0) / ((2.0 * lf + 1.0) * (2.0 * lf + 3.0)).sqrt();
        a[(l, l + 1)] = v;
        a[(l + 1, l)] = v;
    }
    Ok(a)
}

/// `|A| = T |Λ| Tᵀ` from the symmetric eigendecomposition of `A`.
pub fn abs_flux_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(DlraError::InvalidInput("flux matrix must be square".into()));
    }
    let asym = (a - a.transpose()).norm();
    if asym > 1e-12 * a.norm().max(1.0) {
        return Err(DlraError::InvalidInput(format!(
            "flux matrix not symmetric (‖A − Aᵀ‖ = {asym:.3e})"
        )));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| DlraError::Eigen("symmetric eigensolver did not converge".into()))?;
    let lam = eig.eigenvalues.map(f64::abs);
    let t = &eig.eigenvectors;
    let out = t * DMatrix::from_diagonal(&lam) * t.transpose();
    // exact symmetry
    Ok((&out + out.transpose()) * 0.5)
}

/// Centered first difference `D_x` and the upwind stabilization `D_xx`:
/// `D_x[j, j±1] = ±1/(2Δx)`, `D_xx[j, j±1] = 1/(2Δx)`, `D_xx[j, j] = −1/Δx`.
/// Neighbors outside the domain are dropped (zero inflow).
pub fn build_stencils(nx: usize, dx: f64) -> Result<(Tridiagonal, Tridiagonal)> {
    if nx < 3 {
        return Err(DlraError::InvalidInput(format!("need at least 3 cells, got {nx}")));
    }
    if !(dx > 0.0) {
        return Err(DlraError::InvalidInput(format!(
            "cell width must be positive, got {dx}"
        )));
    }
    let half = 1.0 / (2.0 * dx);
    let d_x = Tridiagonal {
        lower: vec![-half; nx - 1],
        diag: vec![0.0; nx],
        upper: vec![half; nx - 1],
    };
    let d_xx = Tridiagonal {
        lower: vec![half; nx - 1],
        diag: vec![-1.0 / dx; nx],
        upper: vec![half; nx - 1],
    };
    Ok((d_x, d_xx))
}

/// Discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanesourceConfig {
    pub nx: usize,
    pub n_moments: usize,
    pub domain: (f64, f64),
    pub cfl: f64,
}

impl Default for PlanesourceConfig {
    fn default() -> Self {
        Self {
            nx: 200,
            n_moments: 100,
            domain: (-5.0, 5.0),
            cfl: 0.99,
        }
    }
}

/// Scalar flux `Φ_j = ∫ f(t, x_j, μ) dμ` on the cell midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFluxField {
    pub values: DVector<f64>,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct PlanesourceProblem {
    config: PlanesourceConfig,
    dx: f64,
    flux: DMatrix<f64>,
    flux_abs: DMatrix<f64>,
    /// Diagonal of `G`.
    scattering: DVector<f64>,
    d_x: Tridiagonal,
    d_xx: Tridiagonal,
}

impl PlanesourceProblem {
    pub fn new(config: PlanesourceConfig) -> Result<Self> {
        let (a, b) = config.domain;
        if !(b > a) {
            return Err(DlraError::InvalidInput(format!("empty domain [{a}, {b}]")));
        }
        if !(config.cfl > 0.0 && config.cfl <= 1.0) {
            return Err(DlraError::InvalidInput(format!(
                "CFL must lie in (0, 1], got {}",
                config.cfl
            )));
        }
        let dx = (b - a) / config.nx as f64;
        let flux = build_flux_matrix(config.n_moments)?;
        let flux_abs = abs_flux_matrix(&flux)?;
        let (d_x, d_xx) = build_stencils(config.nx, dx)?;
        let mut scattering = DVector::from_element(config.n_moments, 1.0);
        scattering[0] = 0.0;
        Ok(Self {
            config,
            dx,
            flux,
            flux_abs,
            scattering,
            d_x,
            d_xx,
        })
    }

    pub fn config(&self) -> &PlanesourceConfig {
        &self.config
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn flux_matrix(&self) -> &DMatrix<f64> {
        &self.flux
    }

    pub fn abs_flux_matrix(&self) -> &DMatrix<f64> {
        &self.flux_abs
    }

    pub fn scattering_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.scattering)
    }

    pub fn stencils(&self) -> (&Tridiagonal, &Tridiagonal) {
        (&self.d_x, &self.d_xx)
    }

    /// Cell midpoints `x_j = a + (j + ½) Δx`.
    pub fn midpoints(&self) -> Vec<f64> {
        let a = self.config.domain.0;
        (0..self.config.nx).map(|j| a + (j as f64 + 0.5) * self.dx).collect()
    }

    /// `h = CFL · Δx`.
    pub fn cfl_step_size(&self) -> f64 {
        self.config.cfl * self.dx
    }

    /// Zeroth-moment column of the initial data: `√2 · f(0, x_j)`.
    fn initial_column(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.config.nx,
            self.midpoints()
                .into_iter()
                .map(|x| ZEROTH_MOMENT_WEIGHT * initial_pulse(x)),
        )
    }

    /// Isotropic initial data as a rank-1 factorization `U = c/‖c‖`,
    /// `S = [‖c‖]`, `V = e₁`.
    pub fn initial_condition(&self) -> FactoredMatrix {
        let c = self.initial_column();
        let norm = c.norm();
        let u = DMatrix::from_column_slice(self.config.nx, 1, (c / norm).as_slice());
        let mut v = DMatrix::zeros(self.config.n_moments, 1);
        v[(0, 0)] = 1.0;
        FactoredMatrix::from_parts(u, DMatrix::from_element(1, 1, norm), v)
    }

    /// Initial data seeded at rank `r0`: the rank-1 factorization padded by
    /// orthonormal directions with singular value [`SEED_SINGULAR_VALUE`].
    pub fn initial_condition_with_rank(&self, r0: usize) -> Result<FactoredMatrix> {
        let (nx, n) = (self.config.nx, self.config.n_moments);
        if r0 == 0 || r0 > nx.min(n) {
            return Err(DlraError::InvalidInput(format!(
                "seed rank {r0} not in 1..={}",
                nx.min(n)
            )));
        }
        let y = self.initial_condition();
        if r0 == 1 {
            return Ok(y);
        }
        // Deterministic smooth candidate directions for the spatial padding.
        let cand = DMatrix::from_fn(nx, r0 - 1, |i, j| (((i + 1) * (j + 1)) as f64 * 0.37).sin());
        let aug = orthonormalize_augment(y.u(), &cand)?;
        if aug.effective_rank() < r0 {
            return Err(DlraError::InvalidInput("could not complete spatial basis".into()));
        }
        let u = aug.effective();
        let v = DMatrix::from_fn(n, r0, |i, j| if i == j { 1.0 } else { 0.0 });
        let mut s = DMatrix::from_diagonal_element(r0, r0, SEED_SINGULAR_VALUE);
        s[(0, 0)] = y.s()[(0, 0)];
        FactoredMatrix::new(u, s, v)
    }

    /// Dense initial matrix (oracle path).
    pub fn initial_dense(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.config.nx, self.config.n_moments);
        y.set_column(0, &self.initial_column());
        y
    }

    /// `Φ = √2 · U S (first row of V)ᵀ`, without forming `Y`.
    pub fn scalar_flux(&self, y: &FactoredMatrix, time: f64) -> Result<ScalarFluxField> {
        check_dims("scalar_flux", (self.config.nx, self.config.n_moments), y.shape())?;
        Ok(ScalarFluxField {
            values: y.column(0) * ZEROTH_MOMENT_WEIGHT,
            time,
        })
    }

    pub fn scalar_flux_dense(&self, y: &DMatrix<f64>, time: f64) -> Result<ScalarFluxField> {
        check_dims("scalar_flux_dense", (self.config.nx, self.config.n_moments), y.shape())?;
        Ok(ScalarFluxField {
            values: y.column(0) * ZEROTH_MOMENT_WEIGHT,
            time,
        })
    }

    /// `G X` for the diagonal scattering matrix.
    fn scatter(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.scattering[i];
        }
        out
    }
}

impl RhsOperator for PlanesourceProblem {
    fn shape(&self) -> (usize, usize) {
        (self.config.nx, self.config.n_moments)
    }

    fn apply_corange(&self, _t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        // −D_x K (Vᵀ Aᵀ V) + D_xx K (Vᵀ |A|ᵀ V) − K (Vᵀ G V)
        let vav = (&self.flux * v).tr_mul(v);
        let vabsv = (&self.flux_abs * v).tr_mul(v);
        let vgv = self.scatter(v).tr_mul(v);
        let mut out = self.d_xx.apply(&(k * vabsv));
        out -= self.d_x.apply(&(k * vav));
        out -= k * vgv;
        out
    }

    fn apply_range(&self, _t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        // −A L (Uᵀ D_xᵀ U) + |A| L (Uᵀ D_xxᵀ U) − G L (Uᵀ U)
        let udu = self.d_x.apply(u).tr_mul(u);
        let uddu = self.d_xx.apply(u).tr_mul(u);
        let uu = u.tr_mul(u);
        &self.flux_abs * l * uddu - &self.flux * l * udu - self.scatter(l) * uu
    }

    fn galerkin(&self, _t: f64, u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let udu = u.tr_mul(&self.d_x.apply(u));
        let uddu = u.tr_mul(&self.d_xx.apply(u));
        let uu = u.tr_mul(u);
        let vav = (&self.flux * v).tr_mul(v);
        let vabsv = (&self.flux_abs * v).tr_mul(v);
        let vgv = self.scatter(v).tr_mul(v);
        uddu * s * vabsv - udu * s * vav - uu * s * vgv
    }

    fn low_rank_factors(&self, _t: f64, y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        // G = [−D_x U, D_xx U, −U],  H = [A V Sᵀ, |A| V Sᵀ, G V Sᵀ]
        let u = y.u();
        let vs = y.v() * y.s().transpose();
        let g = hstack(&hstack(&(-self.d_x.apply(u)), &self.d_xx.apply(u)), &(-u));
        let h = hstack(
            &hstack(&(&self.flux * &vs), &(&self.flux_abs * &vs)),
            &self.scatter(&vs),
        );
        Some((g, h))
    }

    fn dense_eval(&self, _t: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.d_xx.apply(&(y * self.flux_abs.transpose()));
        out -= self.d_x.apply(&(y * self.flux.transpose()));
        out -= self.scatter(&y.transpose()).transpose();
        out
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        // ‖D_x‖ ≤ 1/Δx, ‖D_xx‖ ≤ 2/Δx, ‖A‖, ‖|A|‖ ≤ 1, ‖G‖ = 1
        Some(3.0 / self.dx + 1.0)
    }
}
