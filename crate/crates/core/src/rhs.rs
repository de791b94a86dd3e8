//! Right-hand sides `F(t, Y)` of matrix ODEs `Ẏ = F(t, Y)`, evaluated only in
//! the structured forms the low-rank steppers need.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dims, DlraError, Result};
use crate::lowrank::{hstack, random_orthonormal, FactoredMatrix};
use crate::substep::{solve_matrix_ode, MethodKind, OdeMethod};

/// Structured evaluations of a matrix-valued vector field.
///
/// Implementations are immutable after construction; the K, L and S workers
/// call them concurrently.
pub trait RhsOperator: Send + Sync {
    /// `(m, n)` of the solution matrix.
    fn shape(&self) -> (usize, usize);

    /// `F(t, K Vᵀ) V`, an `m×r` matrix.
    fn apply_corange(&self, t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64>;

    /// `F(t, U Lᵀ)ᵀ U`, an `n×r` matrix.
    fn apply_range(&self, t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64>;

    /// `Uᵀ F(t, U S Vᵀ) V` for `U` m×k, `S` k×k', `V` n×k'.
    fn galerkin(&self, t: f64, u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64>;

    /// Slim `(G, H)` with `F(t, Y) = G Hᵀ`, when cheaply available.
    fn low_rank_factors(&self, _t: f64, _y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    /// Full `F(t, Y)` on a dense matrix. Oracle and test path only; the
    /// steppers never call it.
    fn dense_eval(&self, t: f64, y: &DMatrix<f64>) -> DMatrix<f64>;

    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }
}

impl<T: RhsOperator + ?Sized> RhsOperator for &T {
    fn shape(&self) -> (usize, usize) {
        (**self).shape()
    }
    fn apply_corange(&self, t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_corange(t, k, v)
    }
    fn apply_range(&self, t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_range(t, u, l)
    }
    fn galerkin(&self, t: f64, u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).galerkin(t, u, s, v)
    }
    fn low_rank_factors(&self, t: f64, y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        (**self).low_rank_factors(t, y)
    }
    fn dense_eval(&self, t: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).dense_eval(t, y)
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        (**self).lipschitz_hint()
    }
}

/// Hides `low_rank_factors` of the wrapped operator, forcing the structured
/// fallback wherever factors would otherwise be used.
#[derive(Debug, Clone)]
pub struct WithoutFactors<O>(pub O);

impl<O: RhsOperator> RhsOperator for WithoutFactors<O> {
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
    fn apply_corange(&self, t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply_corange(t, k, v)
    }
    fn apply_range(&self, t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply_range(t, u, l)
    }
    fn galerkin(&self, t: f64, u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.galerkin(t, u, s, v)
    }
    fn dense_eval(&self, t: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.dense_eval(t, y)
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        self.0.lipschitz_hint()
    }
}

/// `F ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroRhs {
    pub m: usize,
    pub n: usize,
}

impl RhsOperator for ZeroRhs {
    fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }
    fn apply_corange(&self, _t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(k.nrows(), v.ncols())
    }
    fn apply_range(&self, _t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(l.nrows(), u.ncols())
    }
    fn galerkin(&self, _t: f64, u: &DMatrix<f64>, _s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(u.ncols(), v.ncols())
    }
    fn low_rank_factors(&self, _t: f64, y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(y.nrows(), 1), DMatrix::zeros(y.ncols(), 1)))
    }
    fn dense_eval(&self, _t: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(y.nrows(), y.ncols())
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `F(t, Y) = λ Y`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
}

impl RhsOperator for ScaledIdentity {
    fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }
    fn apply_corange(&self, _t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        k * (v.transpose() * v) * self.lambda
    }
    fn apply_range(&self, _t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        l * (u.transpose() * u) * self.lambda
    }
    fn galerkin(&self, _t: f64, u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        (u.transpose() * u) * s * (v.transpose() * v) * self.lambda
    }
    fn low_rank_factors(&self, _t: f64, y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((y.u() * y.s() * self.lambda, y.v().clone()))
    }
    fn dense_eval(&self, _t: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
        y * self.lambda
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lambda.abs())
    }
}

/// Solution-independent dense field `F(t, Y) = F0`. Provides no factors.
#[derive(Debug, Clone)]
pub struct ConstantRhs {
    pub f0: DMatrix<f64>,
}

impl RhsOperator for ConstantRhs {
    fn shape(&self) -> (usize, usize) {
        self.f0.shape()
    }
    fn apply_corange(&self, _t: f64, _k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        &self.f0 * v
    }
    fn apply_range(&self, _t: f64, u: &DMatrix<f64>, _l: &DMatrix<f64>) -> DMatrix<f64> {
        self.f0.tr_mul(u)
    }
    fn galerkin(&self, _t: f64, u: &DMatrix<f64>, _s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        u.tr_mul(&self.f0) * v
    }
    fn dense_eval(&self, _t: f64, _y: &DMatrix<f64>) -> DMatrix<f64> {
        self.f0.clone()
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `F(t, Y) = M Y + Y Nᵀ + C` with an optional low-rank source `C`.
#[derive(Debug, Clone)]
pub struct SylvesterProblem {
    m_mat: DMatrix<f64>,
    n_mat: DMatrix<f64>,
    source: Option<FactoredMatrix>,
}

impl SylvesterProblem {
    pub fn new(m_mat: DMatrix<f64>, n_mat: DMatrix<f64>, source: Option<FactoredMatrix>) -> Result<Self> {
        let (m, n) = (m_mat.nrows(), n_mat.nrows());
        check_dims("SylvesterProblem M", (m, m), m_mat.shape())?;
        check_dims("SylvesterProblem N", (n, n), n_mat.shape())?;
        if let Some(c) = &source {
            check_dims("SylvesterProblem C", (m, n), c.shape())?;
        }
        Ok(Self { m_mat, n_mat, source })
    }

    pub fn m_mat(&self) -> &DMatrix<f64> {
        &self.m_mat
    }

    pub fn n_mat(&self) -> &DMatrix<f64> {
        &self.n_mat
    }

    pub fn source(&self) -> Option<&FactoredMatrix> {
        self.source.as_ref()
    }
}

impl RhsOperator for SylvesterProblem {
    fn shape(&self) -> (usize, usize) {
        (self.m_mat.nrows(), self.n_mat.nrows())
    }

    fn apply_corange(&self, _t: f64, k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let vtv = v.tr_mul(v);
        let mut out = &self.m_mat * k * vtv + k * (v.transpose() * &self.n_mat.tr_mul(v));
        if let Some(c) = &self.source {
            out += c.u() * (c.s() * c.v().tr_mul(v));
        }
        out
    }

    fn apply_range(&self, _t: f64, u: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        let utu = u.tr_mul(u);
        let mut out = l * u.tr_mul(&self.m_mat.tr_mul(u)) + &self.n_mat * l * utu;
        if let Some(c) = &self.source {
            out += c.v() * (c.s().transpose() * c.u().tr_mul(u));
        }
        out
    }

    fn galerkin(&self, _t: f64, u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out =
            u.tr_mul(&(&self.m_mat * u)) * s * v.tr_mul(v) + u.tr_mul(u) * s * (v.transpose() * self.n_mat.tr_mul(v));
        if let Some(c) = &self.source {
            out += u.tr_mul(c.u()) * c.s() * c.v().tr_mul(v);
        }
        out
    }

    fn low_rank_factors(&self, _t: f64, y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        // M U S Vᵀ + U (N V Sᵀ)ᵀ + C_U C_S C_Vᵀ
        let mut g = hstack(&(&self.m_mat * y.u() * y.s()), y.u());
        let mut h = hstack(y.v(), &(&self.n_mat * y.v() * y.s().transpose()));
        if let Some(c) = &self.source {
            g = hstack(&g, &(c.u() * c.s()));
            h = hstack(&h, c.v());
        }
        Some((g, h))
    }

    fn dense_eval(&self, _t: f64, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.m_mat * y + y * self.n_mat.transpose();
        if let Some(c) = &self.source {
            out += c.to_dense();
        }
        out
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.m_mat.norm() + self.n_mat.norm())
    }
}

/// Benchmark Sylvester problem on `size × size` matrices.
///
/// `M` and `N` are second-difference operators with a small first-difference
/// (advective) part, `C` is a random rank-`source_rank` source with
/// singular values `10⁻ʲ`, and the initial value has rank `initial_rank`
/// with singular values `10⁻ʲ`.
pub fn sylvester_benchmark<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    initial_rank: usize,
    source_rank: usize,
) -> Result<(SylvesterProblem, FactoredMatrix)> {
    if size < 2 * initial_rank.max(source_rank) || initial_rank == 0 {
        return Err(DlraError::InvalidInput(format!(
            "size {size} too small for ranks {initial_rank}/{source_rank}"
        )));
    }
    let stencil = |diffusion: f64, advection: f64| {
        DMatrix::from_fn(size, size, |i, j| {
            if i == j {
                -2.0 * diffusion
            } else if j == i + 1 {
                diffusion + advection
            } else if i == j + 1 {
                diffusion - advection
            } else {
                0.0
            }
        })
    };
    let m_mat = stencil(1.0, 0.3);
    let n_mat = stencil(0.5, -0.2);
    let decay = |k: usize| (0..k).map(|j| 10f64.powi(-(j as i32))).collect::<Vec<_>>();
    let source = if source_rank > 0 {
        Some(FactoredMatrix::random(rng, size, size, &decay(source_rank))?)
    } else {
        None
    };
    let y0 = FactoredMatrix::random(rng, size, size, &decay(initial_rank))?;
    Ok((SylvesterProblem::new(m_mat, n_mat, source)?, y0))
}

/// Field `F(t) = Ȧ(t)` along a prescribed rank-`r` path
/// `A(t) = U(t) S(t) V(t)ᵀ`, independent of the solution.
///
/// `U(t) = U₀ cos(tΩ_U) + U_⊥ sin(tΩ_U)` rotates each column of `U₀` in the
/// plane it spans with the matching column of `U_⊥` (likewise `V`), and
/// `S(t) = diag(σ_i e^{λ_i t})`.
#[derive(Debug, Clone)]
pub struct TangentialProblem {
    u0: DMatrix<f64>,
    u_perp: DMatrix<f64>,
    omega_u: DVector<f64>,
    v0: DMatrix<f64>,
    v_perp: DMatrix<f64>,
    omega_v: DVector<f64>,
    sigma: DVector<f64>,
    growth: DVector<f64>,
}

impl TangentialProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        u0: DMatrix<f64>,
        u_perp: DMatrix<f64>,
        omega_u: DVector<f64>,
        v0: DMatrix<f64>,
        v_perp: DMatrix<f64>,
        omega_v: DVector<f64>,
        sigma: DVector<f64>,
        growth: DVector<f64>,
    ) -> Result<Self> {
        let r = sigma.len();
        let m = u0.nrows();
        let n = v0.nrows();
        check_dims("TangentialProblem U0", (m, r), u0.shape())?;
        check_dims("TangentialProblem U_perp", (m, r), u_perp.shape())?;
        check_dims("TangentialProblem V0", (n, r), v0.shape())?;
        check_dims("TangentialProblem V_perp", (n, r), v_perp.shape())?;
        if omega_u.len() != r || omega_v.len() != r || growth.len() != r {
            return Err(DlraError::InvalidInput("rate vectors must have length r".into()));
        }
        let stacked_u = hstack(&u0, &u_perp);
        let stacked_v = hstack(&v0, &v_perp);
        for b in [&stacked_u, &stacked_v] {
            if crate::lowrank::orthonormality_defect(b) > 1e-10 {
                return Err(DlraError::InvalidInput(
                    "(U0, U_perp) and (V0, V_perp) must be orthonormal".into(),
                ));
            }
        }
        Ok(Self {
            u0,
            u_perp,
            omega_u,
            v0,
            v_perp,
            omega_v,
            sigma,
            growth,
        })
    }

    /// Random path with angular rates `omega` on both sides.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        m: usize,
        n: usize,
        sigma: &[f64],
        omega: f64,
        growth: f64,
    ) -> Result<Self> {
        let r = sigma.len();
        if r == 0 || 2 * r > m.min(n) {
            return Err(DlraError::InvalidInput(format!("rank {r} needs m, n >= {}", 2 * r)));
        }
        let bu = random_orthonormal(rng, m, 2 * r);
        let bv = random_orthonormal(rng, n, 2 * r);
        let rates = |scale: f64, rng: &mut R| {
            DVector::from_fn(r, |_, _| {
                scale * (1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal).tanh())
            })
        };
        let omega_u = rates(omega, rng);
        let omega_v = rates(omega, rng);
        let growth = rates(growth, rng);
        Self::new(
            bu.columns(0, r).into_owned(),
            bu.columns(r, r).into_owned(),
            omega_u,
            bv.columns(0, r).into_owned(),
            bv.columns(r, r).into_owned(),
            omega_v,
            DVector::from_column_slice(sigma),
            growth,
        )
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Same path with the singular values replaced.
    pub fn with_singular_values(&self, sigma: &[f64]) -> Result<Self> {
        if sigma.len() != self.rank() {
            return Err(DlraError::InvalidInput("wrong number of singular values".into()));
        }
        let mut out = self.clone();
        out.sigma = DVector::from_column_slice(sigma);
        Ok(out)
    }

    fn rotate(b0: &DMatrix<f64>, bp: &DMatrix<f64>, omega: &DVector<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut b = b0.clone();
        let mut db = b0.clone();
        for j in 0..omega.len() {
            let (s, c) = (omega[j] * t).sin_cos();
            let w = omega[j];
            b.set_column(j, &(b0.column(j) * c + bp.column(j) * s));
            db.set_column(j, &(b0.column(j) * (-s * w) + bp.column(j) * (c * w)));
        }
        (b, db)
    }

    fn core(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let s = DVector::from_fn(self.rank(), |i, _| self.sigma[i] * (self.growth[i] * t).exp());
        let ds = s.component_mul(&self.growth);
        (s, ds)
    }

    /// Exact `A(t)` in factored form.
    pub fn exact(&self, t: f64) -> FactoredMatrix {
        let (u, _) = Self::rotate(&self.u0, &self.u_perp, &self.omega_u, t);
        let (v, _) = Self::rotate(&self.v0, &self.v_perp, &self.omega_v, t);
        let (s, _) = self.core(t);
        FactoredMatrix::from_parts(u, DMatrix::from_diagonal(&s), v)
    }

    /// `Ȧ(t) = G Hᵀ` with `G = [U̇ S, U Ṡ, U S]`, `H = [V, V, V̇]`.
    pub fn derivative_factors(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let (u, du) = Self::rotate(&self.u0, &self.u_perp, &self.omega_u, t);
        let (v, dv) = Self::rotate(&self.v0, &self.v_perp, &self.omega_v, t);
        let (s, ds) = self.core(t);
        let s = DMatrix::from_diagonal(&s);
        let ds = DMatrix::from_diagonal(&ds);
        let g = hstack(&hstack(&(du * &s), &(&u * ds)), &(&u * s));
        let h = hstack(&hstack(&v, &v), &dv);
        (g, h)
    }
}

impl RhsOperator for TangentialProblem {
    fn shape(&self) -> (usize, usize) {
        (self.u0.nrows(), self.v0.nrows())
    }
    fn apply_corange(&self, t: f64, _k: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let (g, h) = self.derivative_factors(t);
        g * h.tr_mul(v)
    }
    fn apply_range(&self, t: f64, u: &DMatrix<f64>, _l: &DMatrix<f64>) -> DMatrix<f64> {
        let (g, h) = self.derivative_factors(t);
        h * g.tr_mul(u)
    }
    fn galerkin(&self, t: f64, u: &DMatrix<f64>, _s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let (g, h) = self.derivative_factors(t);
        u.tr_mul(&g) * h.tr_mul(v)
    }
    fn low_rank_factors(&self, t: f64, _y: &FactoredMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some(self.derivative_factors(t))
    }
    fn dense_eval(&self, t: f64, _y: &DMatrix<f64>) -> DMatrix<f64> {
        let (g, h) = self.derivative_factors(t);
        g * h.transpose()
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Full-rank time stepping of `Ẏ = F(t, Y)` with `dense_eval`. Oracle only.
pub fn dense_reference_solve<O: RhsOperator + ?Sized>(
    op: &O,
    y0: &DMatrix<f64>,
    t0: f64,
    t1: f64,
    h_sub: f64,
    method: MethodKind,
) -> Result<DMatrix<f64>> {
    check_dims("dense_reference_solve", op.shape(), y0.shape())?;
    if !(h_sub > 0.0) || !(t1 >= t0) {
        return Err(DlraError::InvalidInput(format!(
            "need h_sub > 0 and t1 >= t0 (h_sub = {h_sub}, t0 = {t0}, t1 = {t1})"
        )));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.clone());
    }
    let steps = (span / h_sub).round();
    if steps < 1.0 || (steps * h_sub - span).abs() > 1e-9 * span.max(1.0) {
        return Err(DlraError::InvalidInput(format!(
            "h_sub = {h_sub} does not divide [{t0}, {t1}]"
        )));
    }
    let method = OdeMethod::new(method, steps as usize)?;
    solve_matrix_ode(|t, y| op.dense_eval(t, y), y0, t0, t1, method).map_err(|e| match e {
        DlraError::NumericalBlowup { step, stage, .. } => DlraError::NumericalBlowup {
            context: "dense_reference_solve",
            step,
            stage,
        },
        other => other,
    })
}

/// Largest relative deviations of the structured paths from `dense_eval`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub corange: f64,
    pub range: f64,
    pub galerkin: f64,
    pub factors: Option<f64>,
}

impl ConsistencyReport {
    pub fn max_deviation(&self) -> f64 {
        [self.corange, self.range, self.galerkin, self.factors.unwrap_or(0.0)]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn relative_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Checks `apply_corange`, `apply_range`, `galerkin` and (if present)
/// `low_rank_factors` against `dense_eval` at `sample`.
pub fn consistency_check<O: RhsOperator + ?Sized>(
    op: &O,
    t: f64,
    sample: &FactoredMatrix,
) -> Result<ConsistencyReport> {
    check_dims("consistency_check", op.shape(), sample.shape())?;
    let (u, s, v) = (sample.u(), sample.s(), sample.v());
    let y = sample.to_dense();
    let f = op.dense_eval(t, &y);
    let k = u * s;
    let l = v * s.transpose();
    let corange = relative_deviation(&op.apply_corange(t, &k, v), &(&f * v));
    let range = relative_deviation(&op.apply_range(t, u, &l), &f.tr_mul(u));
    let galerkin = relative_deviation(&op.galerkin(t, u, s, v), &(u.tr_mul(&f) * v));
    let factors = op
        .low_rank_factors(t, sample)
        .map(|(g, h)| relative_deviation(&(g * h.transpose()), &f));
    Ok(ConsistencyReport {
        corange,
        range,
        galerkin,
        factors,
    })
}
