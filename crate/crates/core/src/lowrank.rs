//! Factored low-rank matrices `Y = U S Vᵀ` and the kernels every integrator
//! step is built from: basis augmentation, tolerance-driven SVD truncation,
//! reassembly of the truncated factors, and factored Frobenius distances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dims, DlraError, Result};

/// Tolerance on `UᵀU = I` accepted by [`FactoredMatrix::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A candidate column is dependent when its norm after projection falls below
/// this fraction of `‖B_new‖_F`.
pub const DEPENDENCE_RTOL: f64 = 1e-12;

/// Rank-`r` matrix `U S Vᵀ` with orthonormal `U` (m×r), `V` (n×r) and a
/// square `r×r` coefficient matrix `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix {
    u: DMatrix<f64>,
    s: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl FactoredMatrix {
    /// Validates shapes, `1 ≤ r ≤ min(m, n)` and orthonormality of both bases.
    pub fn new(u: DMatrix<f64>, s: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = s.nrows();
        if r == 0 {
            return Err(DlraError::InvalidInput("rank must be at least 1".into()));
        }
        check_dims("FactoredMatrix core", (r, r), s.shape())?;
        if u.ncols() != r || v.ncols() != r {
            return Err(DlraError::DimensionMismatch {
                context: "FactoredMatrix bases",
                expected: format!("{r} columns"),
                actual: format!("U has {}, V has {}", u.ncols(), v.ncols()),
            });
        }
        if r > u.nrows().min(v.nrows()) {
            return Err(DlraError::InvalidInput(format!(
                "rank {r} exceeds min({}, {})",
                u.nrows(),
                v.nrows()
            )));
        }
        for (name, b) in [("U", &u), ("V", &v)] {
            let dev = orthonormality_defect(b);
            if !(dev <= ORTHONORMALITY_TOL) {
                return Err(DlraError::InvalidInput(format!(
                    "{name} is not orthonormal (‖{name}ᵀ{name} − I‖_F = {dev:.3e})"
                )));
            }
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(DlraError::InvalidInput("non-finite coefficient matrix".into()));
        }
        Ok(Self { u, s, v })
    }

    pub(crate) fn from_parts(u: DMatrix<f64>, s: DMatrix<f64>, v: DMatrix<f64>) -> Self {
        debug_assert_eq!(u.ncols(), s.nrows());
        debug_assert_eq!(v.ncols(), s.ncols());
        Self { u, s, v }
    }

    /// `σ · u vᵀ` for unit vectors `u`, `v` (normalized here).
    pub fn rank_one(u: &DVector<f64>, sigma: f64, v: &DVector<f64>) -> Result<Self> {
        let (nu, nv) = (u.norm(), v.norm());
        if nu == 0.0 || nv == 0.0 {
            return Err(DlraError::InvalidInput("rank-one factor is zero".into()));
        }
        Self::new(
            DMatrix::from_column_slice(u.len(), 1, (u / nu).as_slice()),
            DMatrix::from_element(1, 1, sigma * nu * nv),
            DMatrix::from_column_slice(v.len(), 1, (v / nv).as_slice()),
        )
    }

    /// Best rank-`rank` approximation of a dense matrix (truncated SVD).
    pub fn from_dense(y: &DMatrix<f64>, rank: usize) -> Result<Self> {
        let (m, n) = y.shape();
        if rank == 0 || rank > m.min(n) {
            return Err(DlraError::InvalidInput(format!("rank {rank} not in 1..={}", m.min(n))));
        }
        let cores = truncate_svd_capped(y, 0.0, rank, rank)?;
        let s1 = cores.s1();
        Ok(Self::from_parts(cores.p1, s1, cores.q1))
    }

    /// Random factors with prescribed singular values (diagonal core).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, singular_values: &[f64]) -> Result<Self> {
        let r = singular_values.len();
        if r == 0 || r > m.min(n) {
            return Err(DlraError::InvalidInput(format!("rank {r} not in 1..={}", m.min(n))));
        }
        let u = random_orthonormal(rng, m, r);
        let v = random_orthonormal(rng, n, r);
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(singular_values));
        Ok(Self::from_parts(u, s, v))
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    pub fn rank(&self) -> usize {
        self.s.nrows()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.u, self.s, self.v)
    }

    /// `U S Vᵀ` as a dense matrix. Intended for tests and oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * &self.s * self.v.transpose()
    }

    /// `‖Y‖_F`, equal to `‖S‖_F` because the bases are orthonormal.
    pub fn frobenius_norm(&self) -> f64 {
        self.s.norm()
    }

    /// Singular values of the represented matrix, nonincreasing.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.s.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Same matrix in a different gauge: `(U Q, Qᵀ S P, V P)` for orthogonal `Q`, `P`.
    pub fn regauge(&self, q: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Self> {
        let r = self.rank();
        check_dims("regauge Q", (r, r), q.shape())?;
        check_dims("regauge P", (r, r), p.shape())?;
        Self::new(&self.u * q, q.transpose() * &self.s * p, &self.v * p)
    }

    /// Rows `i` of `U S Vᵀ e_col` for every `i`: one column of the dense matrix.
    pub fn column(&self, col: usize) -> DVector<f64> {
        let vrow = self.v.row(col).transpose();
        &self.u * (&self.s * vrow)
    }
}

/// `‖BᵀB − I‖_F`.
pub fn orthonormality_defect(b: &DMatrix<f64>) -> f64 {
    let k = b.ncols();
    (b.transpose() * b - DMatrix::<f64>::identity(k, k)).norm()
}

/// Orthonormal `m×r` matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, m: usize, r: usize) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(m, r, |_, _| rng.sample(StandardNormal));
    let q = g.qr().q();
    q.columns(0, r).into_owned()
}

/// Old basis augmented by the orthonormalized new directions.
///
/// Layout: columns `0..old_rank` are bitwise the old basis, columns
/// `old_rank..effective_rank` are the new orthonormal directions, and the
/// remaining columns up to `old_rank + new_count` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBasis {
    b_hat: DMatrix<f64>,
    old_rank: usize,
    effective_rank: usize,
}

impl AugmentedBasis {
    /// Full (possibly zero-padded) augmented basis.
    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    /// Trailing block `B̃` with the new directions, zero-padded.
    pub fn b_tilde(&self) -> DMatrix<f64> {
        let r = self.old_rank;
        self.b_hat.columns(r, self.b_hat.ncols() - r).into_owned()
    }

    /// Only the nonzero new directions.
    pub fn new_directions(&self) -> DMatrix<f64> {
        let r = self.old_rank;
        self.b_hat.columns(r, self.effective_rank - r).into_owned()
    }

    /// Leading `effective_rank` columns: an orthonormal basis of the span.
    pub fn effective(&self) -> DMatrix<f64> {
        self.b_hat.columns(0, self.effective_rank).into_owned()
    }

    pub fn old_rank(&self) -> usize {
        self.old_rank
    }

    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    pub fn new_count(&self) -> usize {
        self.effective_rank - self.old_rank
    }
}

/// Extends an orthonormal `b_old` by an orthonormal basis of the part of
/// `span(b_new)` orthogonal to it.
///
/// Residual columns are processed by column-pivoted modified Gram–Schmidt
/// with one reorthogonalization pass; a residual is dependent once its norm
/// drops to `DEPENDENCE_RTOL · ‖b_new‖_F`. Each accepted direction has its
/// largest-magnitude entry made positive.
pub fn orthonormalize_augment(b_old: &DMatrix<f64>, b_new: &DMatrix<f64>) -> Result<AugmentedBasis> {
    let (m, r) = b_old.shape();
    if b_new.nrows() != m {
        return Err(DlraError::DimensionMismatch {
            context: "orthonormalize_augment",
            expected: format!("{m} rows"),
            actual: format!("{} rows", b_new.nrows()),
        });
    }
    let q = b_new.ncols();
    let threshold = DEPENDENCE_RTOL * b_new.norm();

    // Two classical projections against the old basis.
    let mut resid = b_new - b_old * (b_old.transpose() * b_new);
    resid -= b_old * (b_old.transpose() * &resid);

    let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(q);
    let mut remaining: Vec<usize> = (0..q).collect();
    while !remaining.is_empty() && r + accepted.len() < m {
        let (pos, best_norm) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, resid.column(j).norm()))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_norm <= threshold {
            break;
        }
        let j = remaining.remove(pos);
        let mut w = resid.column(j).into_owned();
        // Reorthogonalize against everything accepted so far.
        w -= b_old * (b_old.transpose() * &w);
        for a in &accepted {
            let c = a.dot(&w);
            w.axpy(-c, a, 1.0);
        }
        let nw = w.norm();
        if nw <= threshold {
            continue;
        }
        w /= nw;
        fix_sign(&mut w);
        for &k in &remaining {
            let c = w.dot(&resid.column(k));
            let mut col = resid.column_mut(k);
            col.axpy(-c, &w, 1.0);
        }
        accepted.push(w);
    }

    let mut b_hat = DMatrix::<f64>::zeros(m, r + q);
    b_hat.columns_mut(0, r).copy_from(b_old);
    for (i, a) in accepted.iter().enumerate() {
        b_hat.column_mut(r + i).copy_from(a);
    }
    Ok(AugmentedBasis {
        b_hat,
        old_rank: r,
        effective_rank: r + accepted.len(),
    })
}

/// Makes the largest-magnitude entry positive (first index wins ties).
fn fix_sign(w: &mut DVector<f64>) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in w.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        w.neg_mut();
    }
}

/// Leading singular triplets kept by a truncation, plus the discarded tail.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationCores {
    /// `r̂_U × r1` left singular vectors.
    pub p1: DMatrix<f64>,
    /// Retained singular values, nonincreasing.
    pub sigma1: DVector<f64>,
    /// `r̂_V × r1` right singular vectors.
    pub q1: DMatrix<f64>,
    pub rank: usize,
    /// `(Σ_{j>r1} σ_j²)^{1/2}`.
    pub tail: f64,
    /// All singular values of the input, nonincreasing.
    pub singular_values: Vec<f64>,
}

impl TruncationCores {
    /// Diagonal `S1 = diag(σ_1, …, σ_r1)`.
    pub fn s1(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.sigma1)
    }
}

/// Residual `‖A − U Σ Vᵀ‖_F`, relative to `‖A‖_F`, above which an SVD is
/// recomputed another way.
pub const SVD_RESIDUAL_RTOL: f64 = 1e-13;

type Svd = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);
type SvdAttempt<'a> = (fn(&DMatrix<f64>) -> Svd, &'a DMatrix<f64>);

fn raw_svd(a: &DMatrix<f64>) -> Svd {
    let svd = a.clone().svd(true, true);
    (
        svd.u.expect("left singular vectors requested"),
        svd.singular_values,
        svd.v_t.expect("right singular vectors requested"),
    )
}

fn transposed_svd(a: &DMatrix<f64>) -> Svd {
    let (u, sigma, vt) = raw_svd(&a.transpose());
    (vt.transpose(), sigma, u.transpose())
}

/// SVD of the triangular factor of `A = Q R` (of `Aᵀ` when `A` is wide).
fn qr_svd(a: &DMatrix<f64>, flip: bool) -> Svd {
    if a.nrows() < a.ncols() {
        let (u, sigma, vt) = qr_svd(&a.transpose(), flip);
        return (vt.transpose(), sigma, u.transpose());
    }
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let (ur, sigma, vt) = if flip { transposed_svd(&r) } else { raw_svd(&r) };
    (q * ur, sigma, vt)
}

/// Thin SVD `A = U diag(σ) Vᵀ`, returned as `(U, σ, Vᵀ)` in no particular
/// order.
///
/// nalgebra's bidiagonal QR iteration occasionally returns orthonormal
/// factors whose product misses `A` by far more than rounding (seen with
/// singular values spread over ten decades next to entries of order 1e-19).
/// The residual against `A` is checked and, if it is too large, `A` with its
/// rounding-level entries zeroed, `Aᵀ` and the triangular factor of a QR
/// decomposition are tried in turn. The first accurate result is returned,
/// otherwise the most accurate one.
pub fn thin_svd(a: &DMatrix<f64>) -> Svd {
    let residual = |(u, sigma, vt): &Svd| {
        let mut us = u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= sigma[j];
        }
        (a - us * vt).norm()
    };
    let tol = SVD_RESIDUAL_RTOL * a.norm();
    let floor = f64::EPSILON * a.norm();
    let cleaned = a.map(|x| if x.abs() < floor { 0.0 } else { x });
    let attempts: [SvdAttempt; 6] = [
        (raw_svd, a),
        (raw_svd, &cleaned),
        (transposed_svd, &cleaned),
        (transposed_svd, a),
        (|a| qr_svd(a, false), &cleaned),
        (|a| qr_svd(a, true), &cleaned),
    ];
    let mut best: Option<(f64, Svd)> = None;
    for (attempt, input) in attempts {
        let candidate = attempt(input);
        let r = residual(&candidate);
        if r <= tol {
            return candidate;
        }
        if best.as_ref().is_none_or(|(rb, _)| r < *rb) {
            best = Some((r, candidate));
        }
    }
    best.expect("at least one attempt").1
}

/// Truncates `s_hat` to the minimal rank whose discarded singular values have
/// root-sum-square at most `theta`, but never below `r_floor`.
pub fn truncate_svd(s_hat: &DMatrix<f64>, theta: f64, r_floor: usize) -> Result<TruncationCores> {
    truncate_svd_capped(s_hat, theta, r_floor, usize::MAX)
}

/// [`truncate_svd`] with an additional upper bound on the retained rank.
pub fn truncate_svd_capped(s_hat: &DMatrix<f64>, theta: f64, r_floor: usize, r_cap: usize) -> Result<TruncationCores> {
    let (p, q) = s_hat.shape();
    let k = p.min(q);
    if k == 0 {
        return Err(DlraError::InvalidInput("empty matrix in truncate_svd".into()));
    }
    if !(theta >= 0.0) {
        return Err(DlraError::InvalidInput(format!("theta must be >= 0, got {theta}")));
    }
    if r_floor == 0 || r_floor > k {
        return Err(DlraError::InvalidInput(format!("r_floor {r_floor} not in 1..={k}")));
    }
    if s_hat.iter().any(|x| !x.is_finite()) {
        return Err(DlraError::NumericalBlowup {
            context: "truncate_svd",
            step: 0,
            stage: 0,
        });
    }
    let (u, sigma, vt) = thin_svd(s_hat);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let sv: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();

    // tails[j] = sqrt(sum_{i >= j} σ_i²), accumulated from the smallest value.
    let mut tails = vec![0.0; k + 1];
    for j in (0..k).rev() {
        tails[j] = tails[j + 1] + sv[j] * sv[j];
    }
    for t in tails.iter_mut() {
        *t = t.sqrt();
    }
    let minimal = (0..=k).find(|&j| tails[j] <= theta).unwrap_or(k);
    let rank = minimal.max(r_floor).min(r_cap.max(r_floor)).min(k);

    let mut p1 = DMatrix::zeros(p, rank);
    let mut q1 = DMatrix::zeros(q, rank);
    for (c, &i) in order.iter().take(rank).enumerate() {
        let mut left = u.column(i).into_owned();
        let mut right = vt.row(i).transpose();
        // Gauge fix: largest-magnitude entry of each left vector positive.
        let imax = left.iamax();
        if left[imax] < 0.0 {
            left.neg_mut();
            right.neg_mut();
        }
        p1.column_mut(c).copy_from(&left);
        q1.column_mut(c).copy_from(&right);
    }
    Ok(TruncationCores {
        p1,
        sigma1: DVector::from_iterator(rank, sv.iter().take(rank).copied()),
        q1,
        rank,
        tail: tails[rank],
        singular_values: sv,
    })
}

/// `U1 = Û P1`, `S1 = diag(σ)`, `V1 = V̂ Q1`.
///
/// `cores` may come from either the effective (unpadded) augmented core or
/// the full zero-padded one; the matching block of `Û`, `V̂` is used.
pub fn assemble_truncated(
    u_hat: &AugmentedBasis,
    v_hat: &AugmentedBasis,
    cores: &TruncationCores,
) -> Result<FactoredMatrix> {
    let pick = |basis: &AugmentedBasis, rows: usize, side: &'static str| -> Result<DMatrix<f64>> {
        if rows == basis.effective_rank() {
            Ok(basis.effective())
        } else if rows == basis.b_hat().ncols() {
            Ok(basis.b_hat().clone())
        } else {
            Err(DlraError::DimensionMismatch {
                context: side,
                expected: format!("{} or {} rows", basis.effective_rank(), basis.b_hat().ncols()),
                actual: format!("{rows} rows"),
            })
        }
    };
    let u = pick(u_hat, cores.p1.nrows(), "assemble_truncated P1")?;
    let v = pick(v_hat, cores.q1.nrows(), "assemble_truncated Q1")?;
    Ok(FactoredMatrix::from_parts(u * &cores.p1, cores.s1(), v * &cores.q1))
}

/// `‖A − B‖_F` without forming either dense matrix.
///
/// `A − B = [U_a U_b] diag(S_a, −S_b) [V_a V_b]ᵀ`; with thin QR factors
/// `[U_a U_b] = Q_u R_u`, `[V_a V_b] = Q_v R_v` the norm is that of the small
/// matrix `R_u diag(S_a, −S_b) R_vᵀ`.
pub fn frobenius_distance(a: &FactoredMatrix, b: &FactoredMatrix) -> Result<f64> {
    check_dims("frobenius_distance", a.shape(), b.shape())?;
    let ru = hstack(a.u(), b.u()).qr().r();
    let rv = hstack(a.v(), b.v()).qr().r();
    let (ra, rb) = (a.rank(), b.rank());
    let mut core = DMatrix::zeros(ra + rb, ra + rb);
    core.view_mut((0, 0), (ra, ra)).copy_from(a.s());
    core.view_mut((ra, ra), (rb, rb)).copy_from(&(-b.s()));
    Ok((ru * core * rv.transpose()).norm())
}

pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `diag(a, 0)` padded to `rows × cols`.
pub(crate) fn pad_block(a: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numerical_rank(a: &DMatrix<f64>) -> usize {
        let sv = a.clone().singular_values();
        let tol = sv.max() * 1e-10 * a.nrows().max(a.ncols()) as f64;
        sv.iter().filter(|&&s| s > tol).count()
    }

    #[test]
    fn augment_with_identical_new_block_adds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_orthonormal(&mut rng, 10, 3);
        let aug = orthonormalize_augment(&b, &b).unwrap();
        assert_eq!(aug.effective_rank(), 3);
        assert_eq!(aug.b_tilde(), DMatrix::zeros(10, 3));
        assert_eq!(aug.b_hat().columns(0, 3), b.columns(0, 3));
    }

    #[test]
    fn augment_by_hand_gram_schmidt() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let new = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let aug = orthonormalize_augment(&e1, &new).unwrap();
        assert_eq!(aug.effective_rank(), 2);
        let t = aug.b_tilde();
        assert!((t[(0, 0)]).abs() < 1e-15);
        assert!((t[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((t[(2, 0)]).abs() < 1e-15);
    }

    #[test]
    fn augment_random_pair_matches_rank_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let old = random_orthonormal(&mut rng, 40, 6);
        let new = DMatrix::<f64>::from_fn(40, 6, |_, _| rng.sample(StandardNormal));
        let aug = orthonormalize_augment(&old, &new).unwrap();
        assert_eq!(aug.effective_rank(), numerical_rank(&hstack(&old, &new)));
        assert_eq!(aug.effective_rank(), 12);
        let eff = aug.effective();
        assert!(orthonormality_defect(&eff) < 1e-12);
        assert!((aug.b_tilde().transpose() * &old).norm() < 1e-12);
        // span(old, new) ⊆ span(eff)
        let proj = &eff * (eff.transpose() * &new);
        assert!((proj - &new).norm() < 1e-12 * new.norm());
    }

    #[test]
    fn augment_rank_deficient_new_block_is_zero_padded_at_the_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let old = random_orthonormal(&mut rng, 20, 3);
        let g = DMatrix::<f64>::from_fn(20, 1, |_, _| rng.sample(StandardNormal));
        // three columns: old direction, one fresh direction, and a multiple of it
        let mut new = DMatrix::zeros(20, 3);
        new.column_mut(0).copy_from(&old.column(1));
        new.column_mut(1).copy_from(&g.column(0));
        new.column_mut(2).copy_from(&(g.column(0) * 2.0 + old.column(0)));
        let aug = orthonormalize_augment(&old, &new).unwrap();
        assert_eq!(aug.effective_rank(), 4);
        assert_eq!(aug.b_hat().columns(4, 2).norm(), 0.0);
    }

    #[test]
    fn augment_dimension_mismatch() {
        let a = DMatrix::<f64>::identity(4, 2);
        let b = DMatrix::<f64>::zeros(5, 2);
        assert!(matches!(
            orthonormalize_augment(&a, &b),
            Err(DlraError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn augment_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let old = random_orthonormal(&mut rng, 30, 4);
        let new = DMatrix::<f64>::from_fn(30, 4, |_, _| rng.sample(StandardNormal));
        let a = orthonormalize_augment(&old, &new).unwrap();
        let b = orthonormalize_augment(&old, &new).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncate_diag_example() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 1e-3, 1e-4]));
        let c = truncate_svd(&s, 1e-2, 1).unwrap();
        assert_eq!(c.rank, 2);
        assert!((c.tail - (1e-6f64 + 1e-8).sqrt()).abs() < 1e-18);
        assert_eq!(c.sigma1.as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn truncate_zero_tolerance_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = DMatrix::<f64>::from_fn(6, 6, |_, _| rng.sample(StandardNormal));
        let c = truncate_svd(&s, 0.0, 1).unwrap();
        assert_eq!(c.rank, 6);
        assert_eq!(c.tail, 0.0);
    }

    #[test]
    fn truncate_zero_matrix_respects_floor() {
        let c = truncate_svd(&DMatrix::zeros(4, 4), 0.1, 1).unwrap();
        assert_eq!(c.rank, 1);
        assert_eq!(c.s1(), DMatrix::zeros(1, 1));
        assert!(orthonormality_defect(&c.p1) < 1e-14);
    }

    #[test]
    fn truncate_rejects_bad_floor() {
        assert!(truncate_svd(&DMatrix::zeros(3, 3), 0.1, 0).is_err());
        assert!(truncate_svd(&DMatrix::zeros(3, 3), 0.1, 4).is_err());
        assert!(truncate_svd(&DMatrix::zeros(3, 3), -1.0, 1).is_err());
    }

    #[test]
    fn truncate_cap_binds() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let c = truncate_svd_capped(&s, 0.0, 1, 2).unwrap();
        assert_eq!(c.rank, 2);
        assert!((c.tail - 1.0).abs() < 1e-15);
    }

    fn augmented_pair(seed: u64, m: usize, n: usize, r: usize) -> (AugmentedBasis, AugmentedBasis) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0 = random_orthonormal(&mut rng, m, r);
        let v0 = random_orthonormal(&mut rng, n, r);
        let k = DMatrix::<f64>::from_fn(m, r, |_, _| rng.sample(StandardNormal));
        let l = DMatrix::<f64>::from_fn(n, r, |_, _| rng.sample(StandardNormal));
        (
            orthonormalize_augment(&u0, &k).unwrap(),
            orthonormalize_augment(&v0, &l).unwrap(),
        )
    }

    #[test]
    fn assemble_identity_cores_reproduces_product() {
        let (uh, vh) = augmented_pair(2, 12, 10, 2);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0]));
        let c = truncate_svd(&s, 0.0, 1).unwrap();
        let y = assemble_truncated(&uh, &vh, &c).unwrap();
        let expect = uh.effective() * &s * vh.effective().transpose();
        assert!((y.to_dense() - expect).norm() < 1e-14);
        assert!(orthonormality_defect(y.u()) < 1e-12);
        assert!(orthonormality_defect(y.v()) < 1e-12);
    }

    #[test]
    fn assemble_rank_one_is_dominant_part() {
        let (uh, vh) = augmented_pair(4, 15, 11, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.sample(StandardNormal));
        let c = truncate_svd_capped(&s, 0.0, 1, 1).unwrap();
        let y = assemble_truncated(&uh, &vh, &c).unwrap();
        let dense = uh.effective() * &s * vh.effective().transpose();
        let svd = dense.clone().svd(true, true);
        let i = svd.singular_values.imax();
        let best = svd.u.unwrap().column(i) * svd.singular_values[i] * svd.v_t.unwrap().row(i);
        assert!((y.to_dense() - best).norm() < 1e-12);
    }

    #[test]
    fn svd_residual_is_at_rounding_level() {
        // A core on which the plain bidiagonal iteration loses five digits.
        #[rustfmt::skip]
        let v = [
            1.064595586512119, 8.405298683674612e-18, -1.1063203811068932e-18, -0.053784938000885935,
            1.2380821791615347e-12, 3.8237657086773334e-11, 2.0244999113669284e-17, 0.10423157486375303,
            -2.4858665353404823e-19, -1.279512833790002e-13, -0.0055583819076354905, -5.028855346332665e-13,
            -5.751775602599574e-18, 3.7422202736082347e-19, 0.010230412431410745, -5.259362660652908e-13,
            6.693012387151652e-14, -0.0007397813397310799, 0.05012076351211486, 3.8789951152851696e-12,
            4.269589064976695e-14, -0.002532170766032923, -1.4856801290445303e-13, 1.797126442122848e-12,
            -3.294388697728447e-11, 0.005901499064608063, -5.92489266902058e-13, 1.6571277316905176e-12,
            -0.00031471007792487743, 1.4371094994759762e-14, -3.0754198720864673e-12, 5.024978295724151e-12,
            0.0006958377731299711, 1.1960071592196142e-13, -2.634154296018182e-13, -5.0317289152173565e-5,
        ];
        // Here neither orientation is accurate until the 1e-19 entries go.
        #[rustfmt::skip]
        let w = [
            1.0165770371611216, -8.154154990719843e-19, -4.400652277124337e-20, 0.0823110082911663,
            1.3877787807814457e-17, -6.245004513516506e-17, 2.3494849226391965e-19, 0.10356374127563658,
            -5.577992108436835e-20, -1.6263032587282567e-18, -0.00715548508496501, -8.673617379884035e-19,
            -1.8938365498437974e-18, -4.33167536832017e-20, 1.042092692151159e-8, 6.267061274210474e-19,
            3.0117491006690884e-19, 3.5785499927527956e-10, -0.04387547003560109, -3.469446951953614e-18,
            1.2045101125097841e-18, 0.0, 0.0, 0.0, -1.7780915628762273e-17, -0.008802490425524327,
            1.6371910235409859e-19, 0.0, 0.0, 0.0, -7.752045533271357e-18, 4.255493527005605e-18,
            -7.690236970123522e-10, 0.0, 0.0, 0.0,
        ];
        for data in [&v[..], &w[..]] {
            let a = DMatrix::from_column_slice(6, 6, data);
            let c = truncate_svd(&a, 0.0, 1).unwrap();
            let rebuilt = &c.p1 * c.s1() * c.q1.transpose();
            assert!((&a - rebuilt).norm() <= SVD_RESIDUAL_RTOL * a.norm());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let m = DMatrix::<f64>::from_fn(7, 5, |_, _| rng.sample(StandardNormal));
            let (u, sigma, vt) = thin_svd(&m);
            let rebuilt = u * DMatrix::from_diagonal(&sigma) * vt;
            assert!((&m - rebuilt).norm() <= SVD_RESIDUAL_RTOL * m.norm());
        }
    }

    #[test]
    fn assemble_padded_core_gives_zero_weight_to_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u0 = random_orthonormal(&mut rng, 8, 2);
        let v0 = random_orthonormal(&mut rng, 8, 2);
        // new block inside span(u0): fully padded
        let uh = orthonormalize_augment(&u0, &(&u0 * 3.0)).unwrap();
        let vh = orthonormalize_augment(&v0, &DMatrix::from_fn(8, 2, |i, j| (i + j) as f64)).unwrap();
        assert_eq!(uh.effective_rank(), 2);
        let s = DMatrix::<f64>::from_fn(4, 4, |i, j| 1.0 + (i * 4 + j) as f64);
        let mut padded = s.clone();
        padded.view_mut((2, 0), (2, 4)).fill(0.0);
        let c = truncate_svd(&padded, 1e-9, 1).unwrap();
        let y = assemble_truncated(&uh, &vh, &c).unwrap();
        let expect = uh.b_hat() * &padded * vh.b_hat().transpose();
        assert!((y.to_dense() - &expect).norm() < 1e-12 * expect.norm());
        assert!(orthonormality_defect(y.u()) < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = FactoredMatrix::random(&mut rng, 30, 30, &[5.0, 2.0, 1.0, 0.5]).unwrap();
        assert!(frobenius_distance(&a, &a).unwrap() < 1e-12);

        let e = |i: usize| {
            let mut v = DVector::zeros(4);
            v[i] = 1.0;
            v
        };
        let p = FactoredMatrix::rank_one(&e(0), 1.0, &e(0)).unwrap();
        let q = FactoredMatrix::rank_one(&e(1), 1.0, &e(1)).unwrap();
        assert!((frobenius_distance(&p, &q).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let b = FactoredMatrix::random(&mut rng, 30, 30, &[3.0, 1.0, 0.1, 0.01]).unwrap();
        let dense = (a.to_dense() - b.to_dense()).norm();
        assert!((frobenius_distance(&a, &b).unwrap() - dense).abs() < 1e-10 * dense);
    }

    #[test]
    fn factored_matrix_validation() {
        let u = DMatrix::<f64>::identity(4, 2);
        assert!(FactoredMatrix::new(u.clone(), DMatrix::identity(2, 2), u.clone()).is_ok());
        assert!(FactoredMatrix::new(u.clone() * 2.0, DMatrix::identity(2, 2), u.clone()).is_err());
        assert!(FactoredMatrix::new(u.clone(), DMatrix::identity(3, 3), u.clone()).is_err());
        assert!(FactoredMatrix::new(DMatrix::zeros(4, 0), DMatrix::zeros(0, 0), DMatrix::zeros(4, 0)).is_err());
    }

    #[test]
    fn norm_equals_core_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let y = FactoredMatrix::random(&mut rng, 25, 18, &[2.0, 1.5, 0.3]).unwrap();
        assert!((y.to_dense().norm() - y.frobenius_norm()).abs() < 1e-12);
        let col = y.column(4);
        assert!((col - y.to_dense().column(4)).norm() < 1e-14);
    }
}
