//! Squared-loss solver for the generalized lasso
//!
//! ```text
//!   minimize  (1/2) ||y - X beta||^2 + lambda ||D beta||_1
//! ```
//!
//! The solver runs ADMM on the split `D beta = z`, whose scaled dual variable
//! delivers the dual pair of the problem: at convergence `u = rho * w`
//! satisfies `X^T (y - X beta) = D^T u` with `||u||_inf <= lambda`, i.e.
//! `gamma = u / lambda` is an optimal subgradient of the l1 term and
//! `v = y - X beta` solves the constrained projection dual. Once the boundary
//! pattern of `gamma` stabilizes, a direct finisher solves the problem
//! restricted to `null(D_-B)` and is accepted only if the full KKT system
//! verifies at tight tolerance, which gives machine-precision answers without
//! waiting out a first-order tail.
//!
//! Alongside the solver live the KKT checker, boundary/active-set extraction,
//! the closed-form fit/solution reconstructions from a boundary pattern, and
//! the centering/scaling preprocessing variants.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, ensure_finite_matrix, ensure_finite_vector, NumericTolerances};
use crate::{Error, Result};

/// Data for one generalized-lasso problem.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub lambda: f64,
}

impl ProblemInstance {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, d: DMatrix<f64>, lambda: f64) -> Result<Self> {
        ensure_finite_vector("y", &y)?;
        ensure_finite_matrix("X", &x)?;
        ensure_finite_matrix("D", &d)?;
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {} but X has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if d.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} columns but D has {}",
                x.ncols(),
                d.ncols()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput(
                "the design matrix must have at least one row and one column".into(),
            ));
        }
        Ok(ProblemInstance { y, x, d, lambda })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.d.nrows()
    }

    /// Objective value at `beta`.
    pub fn criterion(&self, beta: &DVector<f64>) -> f64 {
        let r = &self.y - &self.x * beta;
        let pen: f64 = (&self.d * beta).iter().map(|v| v.abs()).sum();
        0.5 * r.norm_squared() + self.lambda * pen
    }
}

/// Residuals of the stationarity and subgradient conditions at a candidate
/// primal/dual pair.
#[derive(Clone, Copy, Debug)]
pub struct KktReport {
    /// `|| X^T (y - X beta) - lambda D^T gamma ||_inf`.
    pub stationarity_residual: f64,
    /// Worst violation of the subgradient structure: on coordinates where
    /// `(D beta)_i` is active (beyond the sign threshold), the distance of
    /// `gamma_i` from `sign((D beta)_i)`; elsewhere the overshoot of
    /// `|gamma_i|` beyond 1.
    pub subgradient_violation: f64,
    /// Both residuals within `residual_tol`.
    pub feasible: bool,
}

/// Solver output: primal and dual solutions plus the boundary pattern.
///
/// Index sets are 0-based and sorted; `boundary_signs[k]` is the sign
/// associated with `boundary_set[k]` (and likewise for the active pair).
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub beta: DVector<f64>,
    /// Optimal subgradient of the l1 term (dual vector scaled by 1/lambda).
    pub gamma: DVector<f64>,
    /// `X beta`.
    pub fit: DVector<f64>,
    /// Dual box variable `u = lambda * gamma`.
    pub dual_u: DVector<f64>,
    /// Dual residual point `v = y - X beta`.
    pub dual_v: DVector<f64>,
    /// `B = { i : |gamma_i| = 1 }` within the sign threshold.
    pub boundary_set: Vec<usize>,
    pub boundary_signs: Vec<f64>,
    /// `A = supp(D beta)` within the sign threshold.
    pub active_set: Vec<usize>,
    pub active_signs: Vec<f64>,
    pub kkt: KktReport,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Human-readable diagnostics (e.g. rank-deficiency warnings).
    pub notes: Vec<String>,
}

/// Warm-start state carried between related solves (the ADMM split variable
/// and scaled dual).
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
}

/// Knobs for [`solve`]. The defaults are deterministic; `rho`,
/// `over_relaxation`, and `init_seed` exist so that repeated solves can take
/// genuinely different algorithmic paths when probing solution invariance.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tols: NumericTolerances,
    pub max_iterations: usize,
    /// ADMM penalty parameter; `None` picks `lambda` (scale-matched).
    pub rho: Option<f64>,
    /// Relaxation factor in [1, 2).
    pub over_relaxation: f64,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Attempt the direct boundary-pattern finisher once the pattern settles.
    pub use_finisher: bool,
    /// Randomize the initial split/dual variables (seeded) instead of zeros.
    pub init_seed: Option<u64>,
    pub warm_start: Option<WarmStart>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tols: NumericTolerances::default(),
            max_iterations: 100_000,
            rho: None,
            over_relaxation: 1.5,
            gap_tol: 1e-10,
            use_finisher: true,
            init_seed: None,
            warm_start: None,
        }
    }
}

/// How often (in iterations) convergence is measured and the finisher tried.
const CHECK_EVERY: usize = 25;
/// How often the penalty parameter is rebalanced.
const RHO_ADAPT_EVERY: usize = 100;

/// `||v||_inf` that tolerates empty vectors (nalgebra's `amax` does not).
fn amax_or_zero(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

/// Linear solver for the beta-step: Cholesky when `X^T X + rho D^T D` is
/// positive definite, otherwise a pseudoinverse (the step is then the
/// minimum-norm solution, which is consistent because the right-hand side
/// always lies in the range).
enum BetaStep {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Pinv(DMatrix<f64>),
}

impl BetaStep {
    fn factor(h: &DMatrix<f64>, tols: &NumericTolerances) -> Result<Self> {
        match nalgebra::Cholesky::new(h.clone()) {
            Some(c) => Ok(BetaStep::Chol(c)),
            None => Ok(BetaStep::Pinv(linalg::pseudo_inverse(h, tols)?)),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            BetaStep::Chol(c) => c.solve(rhs),
            BetaStep::Pinv(p) => p * rhs,
        }
    }
}

/// Solves the generalized lasso, returning primal and dual solutions with
/// KKT diagnostics.
pub fn solve(inst: &ProblemInstance, opts: &SolveOptions) -> Result<SolveResult> {
    opts.tols.validate()?;
    if !(opts.over_relaxation >= 1.0 && opts.over_relaxation < 2.0) {
        return Err(Error::InvalidInput(format!(
            "over_relaxation must lie in [1, 2), got {}",
            opts.over_relaxation
        )));
    }
    if inst.lambda == 0.0 || inst.m() == 0 {
        return solve_least_squares(inst, opts);
    }
    solve_admm(inst, opts)
}

/// `lambda = 0` (or an empty penalty): plain least squares via the
/// pseudoinverse, with an explicit note when the solution is not unique.
fn solve_least_squares(inst: &ProblemInstance, opts: &SolveOptions) -> Result<SolveResult> {
    let tols = &opts.tols;
    let beta = linalg::least_squares_min_norm(&inst.x, &inst.y, tols)?;
    let fit = &inst.x * &beta;
    let dbeta = &inst.d * &beta;
    // Any subgradient works in the stationarity equation when lambda = 0;
    // pick the canonical one that matches the active signs so that the
    // boundary set coincides with the active set.
    let act_scale = tols.sign_tol * (1.0 + amax_or_zero(&dbeta));
    let gamma = DVector::from_fn(inst.m(), |i, _| {
        if dbeta[i].abs() > act_scale {
            dbeta[i].signum()
        } else {
            0.0
        }
    });
    let mut notes = Vec::new();
    if linalg::rank(&inst.x, tols)? < inst.p() {
        notes.push(
            "design matrix is rank-deficient at lambda = 0; returned the minimum-norm \
             least-squares solution (the minimizer is not unique)"
                .to_string(),
        );
    }
    let kkt = kkt_check(inst, &beta, &gamma, tols)?;
    let (boundary_set, boundary_signs) = extract_boundary(&gamma, tols)?;
    let (active_set, active_signs) = extract_active(&inst.d, &beta, tols)?;
    let r = &inst.y - &fit;
    let duality_gap = (inst.lambda * dbeta.iter().map(|v| v.abs()).sum::<f64>()
        - r.dot(&fit))
    .abs();
    Ok(SolveResult {
        dual_u: &gamma * inst.lambda,
        dual_v: r,
        beta,
        gamma,
        fit,
        boundary_set,
        boundary_signs,
        active_set,
        active_signs,
        kkt,
        duality_gap,
        iterations: 0,
        notes,
    })
}

fn solve_admm(inst: &ProblemInstance, opts: &SolveOptions) -> Result<SolveResult> {
    let tols = &opts.tols;
    let m = inst.m();
    let lambda = inst.lambda;
    let alpha = opts.over_relaxation;

    let xtx = inst.x.transpose() * &inst.x;
    let dtd = inst.d.transpose() * &inst.d;
    let xty = inst.x.transpose() * &inst.y;
    let rho0 = opts.rho.unwrap_or(lambda);
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho0}")));
    }
    let mut rho = rho0;
    let mut step = BetaStep::factor(&(&xtx + &dtd * rho), tols)?;

    // Initial split/dual variables.
    let (mut z, mut w) = match (&opts.warm_start, opts.init_seed) {
        (Some(ws), _) => {
            if ws.z.len() != m || ws.w.len() != m {
                return Err(Error::DimensionMismatch(
                    "warm start has the wrong number of penalty coordinates".into(),
                ));
            }
            (ws.z.clone(), ws.w.clone())
        }
        (None, Some(seed)) => {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scale = (1.0 + inst.y.norm()) / (m as f64).sqrt();
            let z = DVector::from_fn(m, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            });
            let w = DVector::from_fn(m, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * 0.5 * lambda / rho
            });
            (z, w)
        }
        (None, None) => (DVector::zeros(m), DVector::zeros(m)),
    };

    let stat_target = 0.5 * tols.residual_tol;
    let subg_target = 0.5 * tols.residual_tol;
    let mut beta: DVector<f64>;
    let mut last_boundary: Option<Vec<usize>> = None;
    let mut failed_boundary: Option<Vec<usize>> = None;
    let mut last_stat = f64::INFINITY;
    let mut last_subg = f64::INFINITY;
    let mut last_gap = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        // beta-step
        let rhs = &xty + inst.d.transpose() * ((&z - &w) * rho);
        beta = step.solve(&rhs);
        let dbeta = &inst.d * &beta;
        // relaxed z-step
        let h = &dbeta * alpha + &z * (1.0 - alpha);
        let z_old = z.clone();
        let kappa = lambda / rho;
        z = DVector::from_fn(m, |i, _| soft_threshold(h[i] + w[i], kappa));
        // dual update
        w += &h - &z;

        if iter % CHECK_EVERY == 0 {
            let gamma = &w * (rho / lambda);
            let resid = &inst.y - &inst.x * &beta;
            let stat = (inst.x.transpose() * &resid - inst.d.transpose() * (&gamma * lambda))
                .amax();
            let kkt_now = subgradient_violation(&dbeta, &gamma, tols);
            let pen: f64 = dbeta.iter().map(|v| v.abs()).sum();
            let f = 0.5 * resid.norm_squared() + lambda * pen;
            let gap = (lambda * pen - resid.dot(&(&inst.x * &beta))).abs();
            last_stat = stat;
            last_subg = kkt_now;
            last_gap = gap;
            if stat <= stat_target && kkt_now <= subg_target && gap <= opts.gap_tol * (1.0 + f.abs())
            {
                return assemble_result(inst, beta, gamma, iter, tols);
            }
            if opts.use_finisher {
                let (b_set, s) = extract_boundary(&clamp_box(&gamma), tols)?;
                let stable = last_boundary.as_deref() == Some(b_set.as_slice());
                let already_failed = failed_boundary.as_deref() == Some(b_set.as_slice());
                if stable && !already_failed {
                    if let Some((beta_f, gamma_f)) =
                        try_finish(inst, &b_set, &s, &gamma, opts)?
                    {
                        return assemble_result(inst, beta_f, gamma_f, iter, tols);
                    }
                    failed_boundary = Some(b_set.clone());
                }
                last_boundary = Some(b_set);
            }
        }

        if iter % RHO_ADAPT_EVERY == 0 {
            // Residual balancing keeps the two ADMM residuals comparable.
            let r_primal = (&dbeta - &z).norm();
            let r_dual = (inst.d.transpose() * (&z - &z_old)).norm() * rho;
            let mut new_rho = rho;
            if r_primal > 10.0 * r_dual {
                new_rho = (rho * 2.0).min(rho0 * 1e3);
            } else if r_dual > 10.0 * r_primal {
                new_rho = (rho / 2.0).max(rho0 * 1e-3);
            }
            if new_rho != rho {
                // Keep the unscaled dual u = rho * w fixed across the change.
                w *= rho / new_rho;
                rho = new_rho;
                step = BetaStep::factor(&(&xtx + &dtd * rho), tols)?;
            }
        }

        if !beta.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged(format!(
                "ADMM iterates became non-finite at iteration {iter}"
            )));
        }
    }
    Err(Error::NonConvergence(format!(
        "ADMM hit the iteration cap {} (stationarity {:.3e}, subgradient {:.3e}, gap {:.3e})",
        opts.max_iterations, last_stat, last_subg, last_gap
    )))
}

fn clamp_box(gamma: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(gamma.len(), |i, _| gamma[i].clamp(-1.0, 1.0))
}

/// Direct solve restricted to the boundary pattern `(B, s)`: minimizes the
/// objective over `null(D_-B)` where the penalty is linear, then recovers the
/// subgradient by least squares on the stationarity equation. Returns `None`
/// unless the full KKT system verifies at a tolerance strictly tighter than
/// the reporting threshold.
fn try_finish(
    inst: &ProblemInstance,
    b_set: &[usize],
    s: &[f64],
    gamma_hint: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    let tols = &opts.tols;
    let lambda = inst.lambda;
    let complement = linalg::complement_indices(inst.m(), b_set);
    let d_neg = linalg::row_submatrix(&inst.d, &complement)?;
    let u = linalg::null_space_basis(&d_neg, tols)?;
    let beta = if u.dim() == 0 {
        DVector::zeros(inst.p())
    } else {
        let xu = &inst.x * &u.basis;
        let d_b = linalg::row_submatrix(&inst.d, b_set)?;
        let s_vec = DVector::from_vec(s.to_vec());
        // Linear coefficient of the reduced objective: lambda * (D_B U)^T s.
        let q = (d_b * &u.basis).transpose() * &s_vec * lambda;
        let rhs = xu.transpose() * &inst.y - q;
        // Normal equations (X U)^T (X U) c = rhs via the SVD of X U.
        let c = solve_normal_equations(&xu, &rhs, tols)?;
        &u.basis * c
    };
    // Subgradient: project the running estimate onto the affine set
    // { gamma : lambda D^T gamma = X^T (y - X beta) }.
    let g = inst.x.transpose() * (&inst.y - &inst.x * &beta) / lambda;
    let dt = inst.d.transpose();
    let gamma0 = linalg::least_squares_min_norm(&dt, &g, tols)?;
    let null_dt = linalg::null_space_basis(&dt, tols)?;
    let gamma = if null_dt.dim() > 0 {
        &gamma0 + null_dt.project(&(gamma_hint - &gamma0))?
    } else {
        gamma0
    };

    // Accept only on a strict KKT pass.
    let resid = &inst.y - &inst.x * &beta;
    let stat = (inst.x.transpose() * &resid - dt * (&gamma * lambda)).amax();
    let dbeta = &inst.d * &beta;
    let subg = subgradient_violation(&dbeta, &gamma, tols);
    let pen: f64 = dbeta.iter().map(|v| v.abs()).sum();
    let f = 0.5 * resid.norm_squared() + lambda * pen;
    let gap = (lambda * pen - resid.dot(&(&inst.x * &beta))).abs();
    let strict = 0.25 * tols.residual_tol;
    if stat <= strict && subg <= strict && gap <= 0.5 * opts.gap_tol * (1.0 + f.abs()) {
        Ok(Some((beta, gamma)))
    } else {
        Ok(None)
    }
}

/// Minimum-norm solution of `M^T M c = rhs` from the SVD of `M`.
fn solve_normal_equations(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    tols: &NumericTolerances,
) -> Result<DVector<f64>> {
    if m.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let work = if m.nrows() < m.ncols() {
        let mut padded = DMatrix::zeros(m.ncols(), m.ncols());
        padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let (_, sig, v_t) = linalg::sorted_svd(&work)?;
    let smax = sig.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = tols.svd_cutoff(m.nrows(), m.ncols(), smax);
    let mut c = DVector::zeros(m.ncols());
    for i in 0..sig.len() {
        if sig[i] > cutoff {
            let vi = v_t.row(i).transpose();
            c += &vi * (vi.dot(rhs) / (sig[i] * sig[i]));
        }
    }
    Ok(c)
}

fn assemble_result(
    inst: &ProblemInstance,
    beta: DVector<f64>,
    gamma: DVector<f64>,
    iterations: usize,
    tols: &NumericTolerances,
) -> Result<SolveResult> {
    let fit = &inst.x * &beta;
    let resid = &inst.y - &fit;
    let kkt = kkt_check(inst, &beta, &gamma, tols)?;
    let (boundary_set, boundary_signs) = extract_boundary(&clamp_box(&gamma), tols)?;
    let (active_set, active_signs) = extract_active(&inst.d, &beta, tols)?;
    let pen: f64 = (&inst.d * &beta).iter().map(|v| v.abs()).sum();
    let duality_gap = (inst.lambda * pen - resid.dot(&fit)).abs();
    Ok(SolveResult {
        dual_u: &gamma * inst.lambda,
        dual_v: resid,
        beta,
        gamma,
        fit,
        boundary_set,
        boundary_signs,
        active_set,
        active_signs,
        kkt,
        duality_gap,
        iterations,
        notes: Vec::new(),
    })
}

pub(crate) fn subgradient_violation(
    dbeta: &DVector<f64>,
    gamma: &DVector<f64>,
    tols: &NumericTolerances,
) -> f64 {
    let act_scale = tols.sign_tol * (1.0 + amax_or_zero(dbeta));
    let mut worst: f64 = 0.0;
    for i in 0..dbeta.len() {
        let v = if dbeta[i].abs() > act_scale {
            (gamma[i] - dbeta[i].signum()).abs()
        } else {
            (gamma[i].abs() - 1.0).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Evaluates the optimality conditions at an arbitrary primal/dual pair.
pub fn kkt_check(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    tols: &NumericTolerances,
) -> Result<KktReport> {
    tols.validate()?;
    ensure_finite_vector("beta", beta)?;
    ensure_finite_vector("gamma", gamma)?;
    if beta.len() != inst.p() || gamma.len() != inst.m() {
        return Err(Error::DimensionMismatch(
            "kkt_check: beta/gamma lengths must match the instance".into(),
        ));
    }
    let resid = &inst.y - &inst.x * beta;
    let stationarity_residual =
        (inst.x.transpose() * &resid - inst.d.transpose() * (gamma * inst.lambda)).amax();
    let dbeta = &inst.d * beta;
    let subg = subgradient_violation(&dbeta, gamma, tols);
    Ok(KktReport {
        stationarity_residual,
        subgradient_violation: subg,
        feasible: stationarity_residual <= tols.residual_tol && subg <= tols.residual_tol,
    })
}

/// Reads the boundary set `B = { i : |gamma_i| = 1 }` and its signs off a
/// subgradient vector. Fails if `gamma` leaves the unit box by more than the
/// sign threshold.
pub fn extract_boundary(
    gamma: &DVector<f64>,
    tols: &NumericTolerances,
) -> Result<(Vec<usize>, Vec<f64>)> {
    tols.validate()?;
    ensure_finite_vector("gamma", gamma)?;
    if amax_or_zero(gamma) > 1.0 + tols.sign_tol {
        return Err(Error::InvalidInput(format!(
            "subgradient leaves the unit box: ||gamma||_inf = {}",
            gamma.amax()
        )));
    }
    let mut set = Vec::new();
    let mut signs = Vec::new();
    for i in 0..gamma.len() {
        if gamma[i].abs() >= 1.0 - tols.sign_tol {
            set.push(i);
            signs.push(gamma[i].signum());
        }
    }
    Ok((set, signs))
}

/// Reads the active set `A = supp(D beta)` and its signs, thresholding at
/// `sign_tol * (1 + ||D beta||_inf)`.
pub fn extract_active(
    d: &DMatrix<f64>,
    beta: &DVector<f64>,
    tols: &NumericTolerances,
) -> Result<(Vec<usize>, Vec<f64>)> {
    tols.validate()?;
    ensure_finite_vector("beta", beta)?;
    if beta.len() != d.ncols() {
        return Err(Error::DimensionMismatch(
            "extract_active: beta length must match the penalty column count".into(),
        ));
    }
    let dbeta = d * beta;
    let threshold = tols.sign_tol * (1.0 + amax_or_zero(&dbeta));
    let mut set = Vec::new();
    let mut signs = Vec::new();
    for i in 0..dbeta.len() {
        if dbeta[i].abs() > threshold {
            set.push(i);
            signs.push(dbeta[i].signum());
        }
    }
    Ok((set, signs))
}

pub(crate) fn validate_pattern(rows: usize, b_set: &[usize], s: &[f64]) -> Result<()> {
    if b_set.len() != s.len() {
        return Err(Error::DimensionMismatch(
            "boundary set and sign vector must have equal length".into(),
        ));
    }
    for win in b_set.windows(2) {
        if win[0] >= win[1] {
            return Err(Error::InvalidInput(
                "boundary set must be sorted and duplicate-free".into(),
            ));
        }
    }
    if let Some(&last) = b_set.last() {
        if last >= rows {
            return Err(Error::InvalidInput(format!(
                "boundary index {last} out of range for {rows} penalty rows"
            )));
        }
    }
    if s.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidInput("signs must be +1 or -1".into()));
    }
    Ok(())
}

/// Pieces shared by the fit/solution reconstructions: the map `XP` with `P`
/// the projector onto `null(D_-B)`, its pseudoinverse, and the shifted
/// target `a = y - lambda (P X^T)^+ D_B^T s`.
struct BoundaryForm {
    xp: DMatrix<f64>,
    xp_pinv: DMatrix<f64>,
    a: DVector<f64>,
}

fn boundary_form(
    inst: &ProblemInstance,
    b_set: &[usize],
    s: &[f64],
    tols: &NumericTolerances,
) -> Result<BoundaryForm> {
    validate_pattern(inst.m(), b_set, s)?;
    let complement = linalg::complement_indices(inst.m(), b_set);
    let d_neg = linalg::row_submatrix(&inst.d, &complement)?;
    let u = linalg::null_space_basis(&d_neg, tols)?;
    let projector = u.projector();
    let xp = &inst.x * &projector;
    let xp_pinv = linalg::pseudo_inverse(&xp, tols)?;
    let d_b = linalg::row_submatrix(&inst.d, b_set)?;
    let s_vec = DVector::from_vec(s.to_vec());
    // (P X^T)^+ = ((X P)^T)^+ = ((X P)^+)^T since P is symmetric.
    let a = &inst.y - xp_pinv.transpose() * (d_b.transpose() * s_vec) * inst.lambda;
    Ok(BoundaryForm { xp, xp_pinv, a })
}

/// Closed-form fit determined by a boundary pattern:
/// `X beta = X P (X P)^+ (y - lambda (P X^T)^+ D_B^T s)` with
/// `P` the projector onto `null(D_-B)`.
pub fn fit_from_boundary(
    inst: &ProblemInstance,
    b_set: &[usize],
    s: &[f64],
    tols: &NumericTolerances,
) -> Result<DVector<f64>> {
    let form = boundary_form(inst, b_set, s, tols)?;
    Ok(&form.xp * (&form.xp_pinv * &form.a))
}

/// Closed-form solution determined by a boundary pattern:
/// `beta = (X P)^+ (y - lambda (P X^T)^+ D_B^T s) + b` where the optional
/// `b` must lie in `null(X) ∩ null(D_-B)`.
pub fn solution_from_boundary(
    inst: &ProblemInstance,
    b_set: &[usize],
    s: &[f64],
    b: Option<&DVector<f64>>,
    tols: &NumericTolerances,
) -> Result<DVector<f64>> {
    let form = boundary_form(inst, b_set, s, tols)?;
    let base = &form.xp_pinv * &form.a;
    match b {
        None => Ok(base),
        Some(extra) => {
            if extra.len() != inst.p() {
                return Err(Error::DimensionMismatch(
                    "null-space displacement has the wrong length".into(),
                ));
            }
            let scale = tols.residual_tol * (1.0 + extra.norm());
            if (&inst.x * extra).norm() > scale {
                return Err(Error::InvalidInput(
                    "displacement leaves null(X)".into(),
                ));
            }
            let complement = linalg::complement_indices(inst.m(), b_set);
            let d_neg = linalg::row_submatrix(&inst.d, &complement)?;
            if d_neg.nrows() > 0 && (&d_neg * extra).norm() > scale {
                return Err(Error::InvalidInput(
                    "displacement leaves null(D_-B)".into(),
                ));
            }
            Ok(base + extra)
        }
    }
}

/// Whether the solution shifted by `b` keeps every boundary coordinate on
/// the correct side: `s_i * (D (beta_0 + b))_i >= -sign_tol` for `i` in `B`.
pub fn sign_feasibility(
    inst: &ProblemInstance,
    b_set: &[usize],
    s: &[f64],
    b: &DVector<f64>,
    tols: &NumericTolerances,
) -> Result<bool> {
    let shifted = solution_from_boundary(inst, b_set, s, Some(b), tols)?;
    let d_b = linalg::row_submatrix(&inst.d, b_set)?;
    let vals = d_b * shifted;
    Ok(b_set
        .iter()
        .enumerate()
        .all(|(k, _)| s[k] * vals[k] >= -tols.sign_tol))
}

/// Replaces `X` by its column-centered version `M X`, `M = I - 11^T/n`.
pub fn center_problem(inst: &ProblemInstance) -> Result<ProblemInstance> {
    let mut x = inst.x.clone();
    for j in 0..x.ncols() {
        let mean = x.column(j).sum() / x.nrows() as f64;
        for i in 0..x.nrows() {
            x[(i, j)] -= mean;
        }
    }
    ProblemInstance::new(inst.y.clone(), x, inst.d.clone(), inst.lambda)
}

/// Replaces `X` by `X W^{-1}` with `W = diag(||X_j||_2)`. Columns with
/// (numerically) zero norm are rejected.
pub fn scale_problem(inst: &ProblemInstance) -> Result<ProblemInstance> {
    let x = rescale_columns(&inst.x, &inst.x)?;
    ProblemInstance::new(inst.y.clone(), x, inst.d.clone(), inst.lambda)
}

/// Centers and then scales: `X -> M X W^{-1}` with `W` computed on the
/// centered matrix. A constant column (zero after centering) is rejected.
pub fn standardize_problem(inst: &ProblemInstance) -> Result<ProblemInstance> {
    let centered = center_problem(inst)?;
    let x = rescale_columns(&centered.x, &inst.x)?;
    ProblemInstance::new(inst.y.clone(), x, inst.d.clone(), inst.lambda)
}

fn rescale_columns(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let norm = x.column(j).norm();
        // Relative to the untransformed column so that a centered-away
        // constant column is caught rather than amplified.
        if norm <= 1e-12 * (1.0 + reference.column(j).norm()) {
            return Err(Error::InvalidInput(format!(
                "column {j} has (numerically) zero norm; cannot scale"
            )));
        }
        for i in 0..x.nrows() {
            out[(i, j)] /= norm;
        }
    }
    Ok(out)
}
