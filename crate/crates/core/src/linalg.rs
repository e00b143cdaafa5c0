//! Dense linear-algebra primitives: numerical rank, null-space bases,
//! pseudoinverses, and subspace projections.
//!
//! Everything here is SVD-backed (via `nalgebra`) and tolerance-explicit.
//! Rank decisions use a relative cutoff
//!
//! ```text
//!   cutoff = rank_tol * sigma_max * max(rows, cols)
//! ```
//!
//! so that rank is stable under benign rescaling of the input. Subspaces are
//! always carried as matrices with orthonormal columns, which keeps projectors
//! (`B * B^T`) and subspace comparisons well conditioned.

use nalgebra::{DMatrix, DVector, SVD};

use crate::{Error, Result};

/// Relative singular-value cutoff for rank decisions. Multiplied by the
/// largest singular value and the larger matrix dimension before use, in the
/// spirit of the usual `eps * sigma_max * max(m, n)` convention; `1e-9` sits
/// far above double-precision round-off while still catching genuine rank
/// deficiency in desk-scale problems.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Absolute residual bound used when deciding whether linear relations hold
/// (KKT residuals, subspace membership, projector agreement).
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;

/// Threshold for reading sign patterns off a converged dual vector: an entry
/// counts as "on the boundary" when its magnitude is within `sign_tol` of 1.
/// Chosen above solver accuracy and far above round-off.
pub const DEFAULT_SIGN_TOL: f64 = 1e-6;

/// Iteration cap handed to the SVD routine.
const SVD_MAX_SWEEPS: usize = 10_000;

/// Tolerance bundle threaded through every numeric decision in the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericTolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_tol: f64,
    /// Absolute bound on residuals of linear relations.
    pub residual_tol: f64,
    /// Boundary-extraction threshold for dual sign patterns.
    pub sign_tol: f64,
}

impl Default for NumericTolerances {
    fn default() -> Self {
        NumericTolerances {
            rank_tol: DEFAULT_RANK_TOL,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            sign_tol: DEFAULT_SIGN_TOL,
        }
    }
}

impl NumericTolerances {
    /// Checks the bundle is usable: every tolerance strictly positive and the
    /// sign threshold small enough to distinguish boundary from interior.
    pub fn validate(&self) -> Result<()> {
        if !(self.rank_tol > 0.0 && self.rank_tol.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rank_tol must be positive and finite, got {}",
                self.rank_tol
            )));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "residual_tol must be positive and finite, got {}",
                self.residual_tol
            )));
        }
        if !(self.sign_tol > 0.0 && self.sign_tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "sign_tol must lie in (0, 1), got {}",
                self.sign_tol
            )));
        }
        Ok(())
    }

    /// Absolute singular-value cutoff for a matrix of the given shape whose
    /// largest singular value is `sigma_max`.
    pub fn svd_cutoff(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        self.rank_tol * sigma_max * rows.max(cols).max(1) as f64
    }
}

/// A linear subspace of `R^ambient_dim`, stored as a matrix with orthonormal
/// columns spanning it. A zero-column matrix represents the trivial subspace.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    pub ambient_dim: usize,
    /// `ambient_dim x dim` matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Trivial subspace `{0}` of the given ambient space.
    pub fn trivial(ambient_dim: usize) -> Self {
        SubspaceBasis {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// The whole ambient space, with the standard basis.
    pub fn full(ambient_dim: usize) -> Self {
        SubspaceBasis {
            ambient_dim,
            basis: DMatrix::identity(ambient_dim, ambient_dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    /// Orthogonal projector `B * B^T` onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "projection target has length {}, subspace lives in R^{}",
                x.len(),
                self.ambient_dim
            )));
        }
        if self.is_trivial() {
            return Ok(DVector::zeros(self.ambient_dim));
        }
        Ok(&self.basis * (self.basis.transpose() * x))
    }

    /// Whether `x` lies in the subspace up to `residual_tol * (1 + ||x||)`.
    pub fn contains(&self, x: &DVector<f64>, tols: &NumericTolerances) -> Result<bool> {
        let proj = self.project(x)?;
        let resid = (x - &proj).norm();
        Ok(resid <= tols.residual_tol * (1.0 + x.norm()))
    }
}

/// Fails on any NaN or infinite entry.
pub fn ensure_finite_matrix(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("matrix `{name}` has a non-finite entry")))
    }
}

/// Fails on any NaN or infinite entry.
pub fn ensure_finite_vector(name: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("vector `{name}` has a non-finite entry")))
    }
}

/// Thin SVD with singular values sorted in descending order.
/// Returns `(u, sigma, v_t)` with `u: rows x k`, `v_t: k x cols`,
/// `k = min(rows, cols)`.
///
/// The factorization from the bidiagonalization backend is verified by
/// reconstruction: on some nearly rank-deficient inputs (e.g. a matrix whose
/// columns agree up to last-bit noise) it can return orthogonal factors that
/// do not multiply back to the input, with singular values off by a factor.
/// When that happens a one-sided Jacobi SVD — slower but numerically robust —
/// recomputes the decomposition.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (u, s, v_t) = {
        let fast = SVD::try_new(m.clone(), true, true, f64::EPSILON, SVD_MAX_SWEEPS)
            .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
        let u = fast.u.expect("u requested");
        let v_t = fast.v_t.expect("v_t requested");
        let s = fast.singular_values;
        if svd_is_trustworthy(m, &u, &s, &v_t) {
            (u, s, v_t)
        } else {
            jacobi_svd(m)
        }
    };
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values"));
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut vt_sorted = DMatrix::zeros(k, v_t.ncols());
    let mut s_sorted = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        vt_sorted.set_row(dst, &v_t.row(src));
        s_sorted[dst] = s[src];
    }
    Ok((u_sorted, s_sorted, vt_sorted))
}

/// Accept a factorization only if all singular values are nonnegative and
/// `u * diag(s) * v_t` reproduces the input to a few digits above roundoff.
fn svd_is_trustworthy(
    m: &DMatrix<f64>,
    u: &DMatrix<f64>,
    s: &DVector<f64>,
    v_t: &DMatrix<f64>,
) -> bool {
    if s.iter().any(|&x| x.is_nan() || x < 0.0) {
        return false;
    }
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let entry_max = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let scale = smax.max(entry_max);
    let recon = u * DMatrix::from_diagonal(s) * v_t;
    let err = (&recon - m).iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    err <= 1e-10 * scale.max(f64::MIN_POSITIVE)
}

/// One-sided Jacobi SVD (Hestenes): orthogonalizes column pairs by plane
/// rotations. Handles the wide case by factoring the transpose. Returns thin
/// factors in the same shape convention as the fast path.
fn jacobi_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    if m.nrows() < m.ncols() {
        // M = (U' S V'^T)^T = V' S U'^T for the tall transpose.
        let (u_t, s, vt_t) = jacobi_svd_tall(&m.transpose());
        return (vt_t.transpose(), s, u_t.transpose());
    }
    jacobi_svd_tall(m)
}

fn jacobi_svd_tall(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    debug_assert!(rows >= cols);
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let g = a.column(i).dot(&a.column(j));
                if alpha * beta == 0.0 || g.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let x = a[(r, i)];
                    let y = a[(r, j)];
                    a[(r, i)] = c * x - s * y;
                    a[(r, j)] = s * x + c * y;
                }
                for r in 0..cols {
                    let x = v[(r, i)];
                    let y = v[(r, j)];
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = DVector::zeros(cols);
    let mut u = DMatrix::zeros(rows, cols);
    for i in 0..cols {
        let norm = a.column(i).norm();
        sigma[i] = norm;
        if norm > 0.0 {
            let scaled = a.column(i) / norm;
            u.set_column(i, &scaled);
        }
    }
    (u, sigma, v.transpose())
}

/// Singular values only, sorted descending.
fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    // Full factors are needed anyway to validate the fast path, so reuse it.
    let (_, s, _) = sorted_svd(m)?;
    Ok(s)
}

/// Numerical rank under the relative SVD cutoff.
pub fn rank(m: &DMatrix<f64>, tols: &NumericTolerances) -> Result<usize> {
    tols.validate()?;
    ensure_finite_matrix("rank input", m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let s = singular_values(m)?;
    let cutoff = tols.svd_cutoff(m.nrows(), m.ncols(), s[0]);
    Ok(s.iter().filter(|&&x| x > cutoff).count())
}

/// Orthonormal basis of the null space `{ v : M v = 0 }`.
///
/// The basis has `cols - rank(M)` columns; wide matrices are handled by
/// zero-padding to square before the SVD so that every right singular vector
/// is available.
pub fn null_space_basis(m: &DMatrix<f64>, tols: &NumericTolerances) -> Result<SubspaceBasis> {
    tols.validate()?;
    ensure_finite_matrix("null_space input", m)?;
    let p = m.ncols();
    if p == 0 {
        return Ok(SubspaceBasis::trivial(0));
    }
    if m.nrows() == 0 {
        return Ok(SubspaceBasis::full(p));
    }
    // Pad with zero rows so the SVD produces all `p` right singular vectors.
    let work = if m.nrows() < p {
        let mut padded = DMatrix::zeros(p, p);
        padded.view_mut((0, 0), (m.nrows(), p)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let (_, s, v_t) = sorted_svd(&work)?;
    let cutoff = tols.svd_cutoff(m.nrows(), p, s[0]);
    let rank = s.iter().filter(|&&x| x > cutoff).count();
    let nullity = p - rank;
    let mut basis = DMatrix::zeros(p, nullity);
    for j in 0..nullity {
        basis.set_column(j, &v_t.row(rank + j).transpose());
    }
    Ok(SubspaceBasis { ambient_dim: p, basis })
}

/// Orthonormal basis of the column space of `M`.
pub fn col_space_basis(m: &DMatrix<f64>, tols: &NumericTolerances) -> Result<SubspaceBasis> {
    tols.validate()?;
    ensure_finite_matrix("col_space input", m)?;
    let n = m.nrows();
    if n == 0 || m.ncols() == 0 {
        return Ok(SubspaceBasis::trivial(n));
    }
    let (u, s, _) = sorted_svd(m)?;
    let cutoff = tols.svd_cutoff(n, m.ncols(), s[0]);
    let rank = s.iter().filter(|&&x| x > cutoff).count();
    let mut basis = DMatrix::zeros(n, rank);
    for j in 0..rank {
        basis.set_column(j, &u.column(j));
    }
    Ok(SubspaceBasis { ambient_dim: n, basis })
}

/// Moore–Penrose pseudoinverse via the SVD, inverting only singular values
/// above the relative cutoff.
pub fn pseudo_inverse(m: &DMatrix<f64>, tols: &NumericTolerances) -> Result<DMatrix<f64>> {
    tols.validate()?;
    ensure_finite_matrix("pseudo_inverse input", m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    let (u, s, v_t) = sorted_svd(m)?;
    let cutoff = tols.svd_cutoff(m.nrows(), m.ncols(), s[0]);
    let rank = s.iter().filter(|&&x| x > cutoff).count();
    let mut pinv = DMatrix::zeros(m.ncols(), m.nrows());
    for i in 0..rank {
        // pinv += (1/sigma_i) * v_i * u_i^T
        let vi = v_t.row(i).transpose();
        let ui = u.column(i);
        pinv += (vi * ui.transpose()) / s[i];
    }
    Ok(pinv)
}

/// Minimum-norm least-squares solution of `M x ~ rhs`.
pub fn least_squares_min_norm(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    tols: &NumericTolerances,
) -> Result<DVector<f64>> {
    if rhs.len() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but rhs has length {}",
            m.nrows(),
            rhs.len()
        )));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(DVector::zeros(m.ncols()));
    }
    let (u, s, v_t) = sorted_svd(m)?;
    let cutoff = tols.svd_cutoff(m.nrows(), m.ncols(), s[0]);
    let rank = s.iter().filter(|&&x| x > cutoff).count();
    let mut x = DVector::zeros(m.ncols());
    for i in 0..rank {
        let coef = u.column(i).dot(rhs) / s[i];
        x += v_t.row(i).transpose() * coef;
    }
    Ok(x)
}

/// Whether two subspaces of the same ambient space coincide, decided by
/// comparing their orthogonal projectors in Frobenius norm.
pub fn subspaces_equal(
    a: &SubspaceBasis,
    b: &SubspaceBasis,
    tols: &NumericTolerances,
) -> Result<bool> {
    tols.validate()?;
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::DimensionMismatch(format!(
            "subspaces live in R^{} and R^{}",
            a.ambient_dim, b.ambient_dim
        )));
    }
    if a.dim() != b.dim() {
        return Ok(false);
    }
    let diff = a.projector() - b.projector();
    Ok(diff.norm() <= tols.residual_tol)
}

/// Stacks matrices with a common column count on top of each other.
pub fn stack_rows(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let cols = blocks
        .iter()
        .map(|b| b.ncols())
        .find(|&c| c > 0)
        .or_else(|| blocks.first().map(|b| b.ncols()))
        .unwrap_or(0);
    if blocks.iter().any(|b| b.ncols() != cols && b.nrows() > 0) {
        return Err(Error::DimensionMismatch(
            "stacked blocks must share a column count".into(),
        ));
    }
    let total_rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total_rows, cols);
    let mut at = 0;
    for b in blocks {
        if b.nrows() > 0 {
            out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
            at += b.nrows();
        }
    }
    Ok(out)
}

/// Rows of `m` indexed by `rows` (0-based), in the given order.
pub fn row_submatrix(m: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        if src >= m.nrows() {
            return Err(Error::InvalidInput(format!(
                "row index {src} out of range for a matrix with {} rows",
                m.nrows()
            )));
        }
        out.set_row(dst, &m.row(src));
    }
    Ok(out)
}

/// Sorted complement of `subset` inside `0..total`.
pub fn complement_indices(total: usize, subset: &[usize]) -> Vec<usize> {
    let mut member = vec![false; total];
    for &i in subset {
        if i < total {
            member[i] = true;
        }
    }
    (0..total).filter(|&i| !member[i]).collect()
}

/// Orthonormal basis of `null(A) ∩ null(B)` obtained from the stacked matrix.
pub fn null_intersection_basis(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tols: &NumericTolerances,
) -> Result<SubspaceBasis> {
    if a.ncols() != b.ncols() && a.nrows() > 0 && b.nrows() > 0 {
        return Err(Error::DimensionMismatch(
            "null-space intersection needs a common column count".into(),
        ));
    }
    let stacked = stack_rows(&[a, b])?;
    null_space_basis(&stacked, tols)
}
