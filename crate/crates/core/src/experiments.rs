//! Randomized probes: Monte Carlo uniqueness rates, local stability of the
//! boundary/active pattern under response perturbation, and invariance of
//! the subspace `X · null(D_-B)` across optimal subgradients.
//!
//! Everything here is seeded and reproducible: trials use per-trial
//! substreams of a counter-based generator, so summaries depend only on
//! `(seed, config)` and not on execution order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certify::{self, CertifyOptions, UniquenessVerdict};
use crate::linalg::{self, NumericTolerances, SubspaceBasis};
use crate::lp::{solve_lp, Cmp, LpOutcome, LpProblem};
use crate::penalty;
use crate::solver_glm::{GlmProblem, LossFamily};
use crate::solver_sq::extract_boundary;
use crate::{Error, Result};

/// Configuration of a Monte Carlo uniqueness run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Number of observations per trial.
    pub n: usize,
    /// Number of predictors per trial.
    pub p: usize,
    /// Penalty builder name (see `penalty::build_named`).
    pub penalty: String,
    pub loss: LossFamily,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
    /// Step used by perturbation-based diagnostics downstream of the run.
    pub perturbation_eps: f64,
    /// Design ensemble. `"gaussian"` draws every entry of `X` (and, for
    /// squared loss, `y`) i.i.d. standard normal. `"duplicated_column"`
    /// overwrites the last column of `X` with column 0 and then builds `y`
    /// around a planted optimal pair: a dual vector with both duplicated
    /// coordinates on the boundary is realized exactly through the row
    /// space of `X`, so weight can shift freely between the two copies and
    /// every trial is non-unique by construction (squared loss only,
    /// `lambda > 0`, `n >= p - 1`).
    #[serde(default = "default_ensemble")]
    pub ensemble: String,
}

fn default_ensemble() -> String {
    "gaussian".to_string()
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput("n and p must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if !(self.perturbation_eps > 0.0 && self.perturbation_eps.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "perturbation_eps must be positive, got {}",
                self.perturbation_eps
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.ensemble != "gaussian" && self.ensemble != "duplicated_column" {
            return Err(Error::InvalidInput(format!(
                "unknown ensemble `{}` (expected gaussian or duplicated_column)",
                self.ensemble
            )));
        }
        if self.ensemble == "duplicated_column" {
            if self.p < 2 {
                return Err(Error::InvalidInput(
                    "duplicated_column ensemble needs p >= 2".into(),
                ));
            }
            if self.loss != LossFamily::Squared {
                return Err(Error::InvalidInput(
                    "duplicated_column ensemble is defined for squared loss".into(),
                ));
            }
            if self.lambda <= 0.0 {
                return Err(Error::InvalidInput(
                    "duplicated_column ensemble needs lambda > 0".into(),
                ));
            }
            if self.n + 1 < self.p {
                return Err(Error::InvalidInput(
                    "duplicated_column ensemble needs n >= p - 1 so the planted dual \
                     vector lies in the row space of X"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// Verdict tallies for one response ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub unique: usize,
    pub non_unique: usize,
    pub undetermined: usize,
}

impl VerdictCounts {
    fn record(&mut self, v: UniquenessVerdict) {
        match v {
            UniquenessVerdict::Unique => self.unique += 1,
            UniquenessVerdict::NonUnique => self.non_unique += 1,
            UniquenessVerdict::Undetermined => self.undetermined += 1,
        }
    }
}

/// One logged non-unique/undetermined trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialExemplar {
    pub trial: usize,
    /// `"model"` or `"surrogate"` (curved families run both response draws).
    pub draw: String,
    pub verdict: UniquenessVerdict,
    pub notes: Vec<String>,
}

/// Outcome of [`monte_carlo_uniqueness`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub config: TrialConfig,
    /// Null-space dimension of the built penalty.
    pub nullity_d: usize,
    /// True when `p > n` and `nullity(D) > n`: the almost-sure uniqueness
    /// guarantee does not apply, but the run executes anyway.
    pub outside_theorem: bool,
    /// Tallies for the primary response draw (standard normal for squared
    /// loss; the actual Bernoulli/Poisson model for curved families).
    pub model: VerdictCounts,
    /// Tallies for the jittered continuous response surrogate (curved
    /// families only; discrete responses carry no absolute-continuity
    /// guarantee, so both draws are reported).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<VerdictCounts>,
    /// Up to 20 exemplars of trials that were not certified unique.
    pub exemplars: Vec<TrialExemplar>,
}

const MAX_EXEMPLARS: usize = 20;

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draws independent instances, certifies each, and tallies the verdicts.
///
/// Trial `t` uses stream `t + 1` of a counter-based generator seeded with
/// `config.seed`, so the summary is reproducible and order-independent. For
/// curved families each trial is certified twice: once with responses drawn
/// from the actual Bernoulli/Poisson model at a random coefficient vector,
/// and once with a jittered continuous surrogate (`(y + U)/2` for logistic,
/// `y + U` for Poisson, `U` uniform on `(0,1)`), which restores the
/// absolute continuity that almost-sure uniqueness statements assume.
pub fn monte_carlo_uniqueness(cfg: &TrialConfig) -> Result<MonteCarloSummary> {
    cfg.validate()?;
    let tols = NumericTolerances::default();
    let d = penalty::build_named(&cfg.penalty, cfg.p, None)?;
    let nullity_d = penalty::nullity(&d, &tols)?;
    let outside_theorem = cfg.p > cfg.n && nullity_d > cfg.n;

    let mut model = VerdictCounts::default();
    let mut surrogate = VerdictCounts::default();
    let mut exemplars: Vec<TrialExemplar> = Vec::new();
    let copts = CertifyOptions {
        tols,
        solve_seed: None,
    };

    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial as u64 + 1);
        let mut x = gaussian_matrix(&mut rng, cfg.n, cfg.p);
        let planted = cfg.ensemble == "duplicated_column";
        if planted {
            let col0 = x.column(0).into_owned();
            x.set_column(cfg.p - 1, &col0);
        }

        let mut draws: Vec<(String, DVector<f64>)> = Vec::new();
        match cfg.loss {
            LossFamily::Squared => {
                let y = if planted {
                    // Plant the optimum directly. With columns 0 and p-1
                    // identical, put both on the dual boundary:
                    // gamma = (1, g_1, ..., g_{p-2}, 1) with interior middle
                    // entries. Realizing X' r = lambda * gamma exactly
                    // (possible because gamma matches the duplication, so it
                    // lies in the row space of X) and setting
                    // y = 2 * col_0 + r makes beta = 2 e_0 optimal with the
                    // duplicated pair active at total weight 2 — the weight
                    // can shift freely between the copies.
                    let mut gamma_t = DVector::zeros(cfg.p);
                    gamma_t[0] = 1.0;
                    gamma_t[cfg.p - 1] = 1.0;
                    for j in 1..cfg.p - 1 {
                        gamma_t[j] = rng.random_range(-0.9..0.9);
                    }
                    let xt = x.transpose();
                    let target = &gamma_t * cfg.lambda;
                    let resid = linalg::least_squares_min_norm(&xt, &target, &tols)?;
                    let defect = (&xt * &resid - &target).amax();
                    if defect > 1e-8 * (1.0 + cfg.lambda) {
                        return Err(Error::Numerical(format!(
                            "planted dual vector not realizable (defect {defect:.2e}); \
                             the drawn design is too degenerate"
                        )));
                    }
                    x.column(0) * 2.0 + resid
                } else {
                    gaussian_vector(&mut rng, cfg.n)
                };
                draws.push(("model".to_string(), y));
            }
            LossFamily::Logistic | LossFamily::Poisson => {
                let scale = 1.0 / (cfg.p as f64).sqrt();
                let beta_star = gaussian_vector(&mut rng, cfg.p) * scale;
                let eta = &x * &beta_star;
                let mut y_model = DVector::zeros(cfg.n);
                let mut y_surr = DVector::zeros(cfg.n);
                for i in 0..cfg.n {
                    let u: f64 = rng.random_range(0.0..1.0);
                    match cfg.loss {
                        LossFamily::Logistic => {
                            let pr = 1.0 / (1.0 + (-eta[i]).exp());
                            let yi = if rng.random_bool(pr) { 1.0 } else { 0.0 };
                            y_model[i] = yi;
                            y_surr[i] = 0.5 * (yi + u);
                        }
                        LossFamily::Poisson => {
                            let mu = eta[i].clamp(-4.0, 3.0).exp();
                            let pois = rand_distr::Poisson::new(mu).map_err(|e| {
                                Error::Numerical(format!("Poisson sampler: {e}"))
                            })?;
                            let yi: f64 = rng.sample(pois);
                            y_model[i] = yi;
                            y_surr[i] = yi + u;
                        }
                        LossFamily::Squared => unreachable!(),
                    }
                }
                draws.push(("model".to_string(), y_model));
                draws.push(("surrogate".to_string(), y_surr));
            }
        }

        for (label, y) in draws {
            let inst = GlmProblem::new(y, x.clone(), d.clone(), cfg.lambda, cfg.loss)?;
            let report = certify::certify_uniqueness(&inst, &copts)?;
            let verdict = report.certificate.verdict;
            if label == "model" {
                model.record(verdict);
            } else {
                surrogate.record(verdict);
            }
            if verdict != UniquenessVerdict::Unique && exemplars.len() < MAX_EXEMPLARS {
                exemplars.push(TrialExemplar {
                    trial,
                    draw: label,
                    verdict,
                    notes: report.certificate.notes.clone(),
                });
            }
        }
    }

    Ok(MonteCarloSummary {
        config: cfg.clone(),
        nullity_d,
        outside_theorem,
        model,
        surrogate: if cfg.loss == LossFamily::Squared {
            None
        } else {
            Some(surrogate)
        },
        exemplars,
    })
}

/// Knobs for [`local_stability_probe`].
#[derive(Clone, Debug)]
pub struct StabilityOptions {
    /// Initial perturbation radius.
    pub eps: f64,
    /// Number of random unit directions.
    pub directions: usize,
    pub seed: u64,
    pub tols: NumericTolerances,
    /// Geometric halvings of `eps` attempted before giving up.
    pub max_shrinks: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            eps: 1e-3,
            directions: 20,
            seed: 0,
            tols: NumericTolerances::default(),
            max_shrinks: 10,
        }
    }
}

/// Outcome of [`local_stability_probe`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub directions: usize,
    /// Directions preserving the full `(B, s, A, r)` pattern at the final
    /// perturbation radius.
    pub preserved: usize,
    /// Re-solves that failed (excluded from `preserved`).
    pub solver_failures: usize,
    pub initial_eps: f64,
    pub final_eps: f64,
    /// Halvings actually performed.
    pub shrink_steps: usize,
    /// True when some radius preserved the pattern in every direction.
    pub stable: bool,
    /// Fraction preserved at each radius tried, largest first.
    pub preserved_history: Vec<f64>,
    /// True when the sensitivity map is nonzero but annihilates the fitted
    /// predictor — the response sits numerically on the low-dimensional set
    /// where the boundary pattern may change under infinitesimal
    /// perturbation.
    pub near_exceptional: bool,
    /// Rows of the sensitivity map (`|B \ A|`).
    pub m_rows: usize,
    pub m_norm: f64,
    pub m_fit_norm: f64,
    pub notes: Vec<String>,
}

fn clamp_response(loss: LossFamily, y: &mut DVector<f64>) -> bool {
    let mut clamped = false;
    match loss {
        LossFamily::Squared => {}
        LossFamily::Logistic => {
            for v in y.iter_mut() {
                let c = v.clamp(0.0, 1.0);
                if c != *v {
                    clamped = true;
                    *v = c;
                }
            }
        }
        LossFamily::Poisson => {
            for v in y.iter_mut() {
                if *v < 0.0 {
                    clamped = true;
                    *v = 0.0;
                }
            }
        }
    }
    clamped
}

type Pattern = (Vec<usize>, Vec<f64>, Vec<usize>, Vec<f64>);

fn solve_pattern(
    inst: &GlmProblem,
    tols: &NumericTolerances,
) -> Result<(Pattern, DVector<f64>)> {
    let copts = CertifyOptions {
        tols: *tols,
        solve_seed: None,
    };
    let (summary, b_set, s) = certify::solve_instance(inst, &copts)?;
    Ok((
        (b_set, s, summary.active_set, summary.active_signs),
        summary.fit,
    ))
}

/// Re-solves at `y' = y + eps * u` for random unit directions `u` and
/// reports whether the boundary set, boundary signs, active set, and active
/// signs all match the unperturbed solution. When any direction breaks the
/// pattern, `eps` is halved (up to `max_shrinks` times) and the probe
/// retries the same directions at the smaller radius.
///
/// The probe also evaluates the sensitivity map of the solved pattern
/// ([`compute_m`]): instances whose map is nonzero yet annihilates the
/// fitted predictor are flagged `near_exceptional` — their pattern may
/// lawfully change under arbitrarily small perturbations, so instability is
/// expected rather than anomalous. Curved-family perturbations are clamped
/// into the valid response domain.
pub fn local_stability_probe(
    inst: &GlmProblem,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    opts.tols.validate()?;
    if opts.directions == 0 {
        return Err(Error::InvalidInput("directions must be at least 1".into()));
    }
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {}",
            opts.eps
        )));
    }
    let mut notes = Vec::new();
    let (reference, fit) = solve_pattern(inst, &opts.tols)?;

    // Sensitivity flag from the solved pattern.
    let (b_set, _, a_set, _) = &reference;
    let m_mat = compute_m(a_set, b_set, &inst.x, &inst.d, &opts.tols)?;
    let m_rows = m_mat.nrows();
    let m_norm = m_mat.norm();
    let m_fit_norm = if m_rows == 0 { 0.0 } else { (&m_mat * &fit).norm() };
    let near_exceptional =
        m_norm > opts.tols.residual_tol && m_fit_norm <= 1e-6 * (1.0 + m_norm * fit.norm());
    if near_exceptional {
        notes.push(
            "near-exceptional: the sensitivity map annihilates the fitted predictor"
                .to_string(),
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dirs: Vec<DVector<f64>> = (0..opts.directions)
        .map(|_| {
            let mut u = gaussian_vector(&mut rng, inst.n());
            let norm = u.norm();
            if norm > 0.0 {
                u /= norm;
            } else {
                u[0] = 1.0;
            }
            u
        })
        .collect();

    let mut eps = opts.eps;
    let mut preserved = 0;
    let mut failures = 0;
    let mut history = Vec::new();
    let mut stable = false;
    let mut shrink_steps = 0;
    let mut any_clamped = false;
    for level in 0..=opts.max_shrinks {
        preserved = 0;
        failures = 0;
        for u in &dirs {
            let mut y2 = &inst.y + u * eps;
            any_clamped |= clamp_response(inst.loss, &mut y2);
            let perturbed =
                GlmProblem::new(y2, inst.x.clone(), inst.d.clone(), inst.lambda, inst.loss)?;
            match solve_pattern(&perturbed, &opts.tols) {
                Ok((pattern, _)) => {
                    if pattern == reference {
                        preserved += 1;
                    }
                }
                Err(
                    e @ (Error::DimensionMismatch(_)
                    | Error::InvalidInput(_)
                    | Error::NonFinite(_)),
                ) => return Err(e),
                Err(_) => failures += 1,
            }
        }
        history.push(preserved as f64 / opts.directions as f64);
        shrink_steps = level;
        if preserved == opts.directions {
            stable = true;
            break;
        }
        if level < opts.max_shrinks {
            eps *= 0.5;
        }
    }
    if any_clamped {
        notes.push("perturbations clamped into the valid response domain".to_string());
    }

    Ok(StabilityReport {
        directions: opts.directions,
        preserved,
        solver_failures: failures,
        initial_eps: opts.eps,
        final_eps: eps,
        shrink_steps,
        stable,
        preserved_history: history,
        near_exceptional,
        m_rows,
        m_norm,
        m_fit_norm,
        notes,
    })
}

/// Knobs for [`subspace_invariance_probe`].
#[derive(Clone, Debug)]
pub struct InvarianceOptions {
    /// Jittered re-solves and dual-vertex samples, each.
    pub runs: usize,
    pub seed: u64,
    pub tols: NumericTolerances,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        InvarianceOptions {
            runs: 12,
            seed: 0,
            tols: NumericTolerances::default(),
        }
    }
}

/// Outcome of [`subspace_invariance_probe`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// Distinct boundary sets observed, in discovery order.
    pub boundary_sets: Vec<Vec<usize>>,
    /// Distinct active sets observed across re-solves.
    pub active_sets: Vec<Vec<usize>>,
    pub single_boundary_set: bool,
    /// Common dimension of the boundary-derived subspaces when they agree.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace_dim: Option<usize>,
    /// All `X · null(D_-B)` pairwise equal (projectors within 1e-6).
    pub all_pairwise_equal: bool,
    /// Every active-set-derived subspace equals the boundary-derived one.
    pub active_matches_boundary: bool,
    /// Dual-face vertices successfully sampled.
    pub vertices_sampled: usize,
    pub notes: Vec<String>,
}

fn image_subspace(
    x: &DMatrix<f64>,
    d: &DMatrix<f64>,
    set: &[usize],
    tols: &NumericTolerances,
) -> Result<SubspaceBasis> {
    let comp = linalg::complement_indices(d.nrows(), set);
    let d_neg = linalg::row_submatrix(d, &comp)?;
    let nb = linalg::null_space_basis(&d_neg, tols)?;
    if nb.is_trivial() {
        return Ok(SubspaceBasis::trivial(x.nrows()));
    }
    linalg::col_space_basis(&(x * &nb.basis), tols)
}

/// Harvests several optimal subgradients and checks that every observed
/// boundary set `B` (and every active set `A`) spans the same subspace
/// `X · null(D_-B)`.
///
/// Subgradients are harvested two ways: re-solving with jittered internal
/// solver parameters, and sampling vertices of the optimal dual face
/// `{gamma : D^T gamma = X^T(y - mean)/lambda, |gamma|_inf <= 1}` with
/// random linear objectives. The harvest samples rather than enumerates —
/// no finite enumeration of all optimal subgradients is attempted — so a
/// "single boundary set observed" report means the probe found no second
/// set, not that none exists. Subspaces are compared through their orthogonal
/// projectors at tolerance `1e-6`.
pub fn subspace_invariance_probe(
    inst: &GlmProblem,
    opts: &InvarianceOptions,
) -> Result<InvarianceReport> {
    opts.tols.validate()?;
    if opts.runs == 0 {
        return Err(Error::InvalidInput("runs must be at least 1".into()));
    }
    let mut notes = Vec::new();
    let copts = CertifyOptions {
        tols: opts.tols,
        solve_seed: None,
    };
    let (reference, b0, _s0) = certify::solve_instance(inst, &copts)?;

    let mut boundary_sets: Vec<Vec<usize>> = vec![b0];
    let mut active_sets: Vec<Vec<usize>> = vec![reference.active_set.clone()];
    let push_unique = |store: &mut Vec<Vec<usize>>, v: Vec<usize>| {
        if !store.contains(&v) {
            store.push(v);
        }
    };

    // Jittered re-solves.
    for j in 0..opts.runs {
        let jopts = CertifyOptions {
            tols: opts.tols,
            solve_seed: Some(opts.seed.wrapping_add(j as u64 + 1)),
        };
        match certify::solve_instance(inst, &jopts) {
            Ok((summary, b, _)) => {
                push_unique(&mut boundary_sets, b);
                push_unique(&mut active_sets, summary.active_set);
            }
            Err(
                e @ (Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::NonFinite(_)),
            ) => return Err(e),
            Err(e) => notes.push(format!("jittered re-solve {j} failed: {e}")),
        }
    }

    // Dual-face vertex sampling.
    let mut vertices_sampled = 0;
    if inst.lambda > 0.0 && inst.m() > 0 {
        let rows = inst.m();
        let residual = &inst.y - &reference.mean;
        let c_star = (inst.x.transpose() * residual) / inst.lambda;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for _ in 0..opts.runs {
            let w = gaussian_vector(&mut rng, rows);
            let mut lp = LpProblem::new(rows);
            for i in 0..rows {
                lp.bounds[i] = (-1.0, 1.0);
                lp.objective[i] = w[i];
            }
            for jcol in 0..inst.p() {
                let row: Vec<f64> = (0..rows).map(|i| inst.d[(i, jcol)]).collect();
                lp.push(row, Cmp::Eq, c_star[jcol]);
            }
            match solve_lp(&lp)? {
                LpOutcome::Optimal { x: gamma_v, .. } => {
                    let clamped =
                        DVector::from_iterator(rows, gamma_v.iter().map(|g| g.clamp(-1.0, 1.0)));
                    let (b, _) = extract_boundary(&clamped, &opts.tols)?;
                    push_unique(&mut boundary_sets, b);
                    vertices_sampled += 1;
                }
                LpOutcome::Infeasible => {
                    notes.push(
                        "dual-face vertex sample reported infeasible (tolerance mismatch)"
                            .to_string(),
                    );
                }
                LpOutcome::Unbounded => {
                    notes.push("dual-face vertex sample reported unbounded".to_string());
                }
            }
        }
    } else {
        notes.push("no dual face to sample (lambda = 0 or no penalty rows)".to_string());
    }

    let single_boundary_set = boundary_sets.len() == 1;
    if single_boundary_set {
        notes.push("single boundary set observed".to_string());
    }

    // Compare subspaces at the stated reporting tolerance.
    let cmp_tols = NumericTolerances {
        residual_tol: opts.tols.residual_tol.max(1e-6),
        ..opts.tols
    };
    let b_spaces: Vec<SubspaceBasis> = boundary_sets
        .iter()
        .map(|b| image_subspace(&inst.x, &inst.d, b, &opts.tols))
        .collect::<Result<_>>()?;
    let mut all_pairwise_equal = true;
    for i in 0..b_spaces.len() {
        for j in i + 1..b_spaces.len() {
            if !linalg::subspaces_equal(&b_spaces[i], &b_spaces[j], &cmp_tols)? {
                all_pairwise_equal = false;
                notes.push(format!(
                    "subspaces for boundary sets {:?} and {:?} differ",
                    boundary_sets[i], boundary_sets[j]
                ));
            }
        }
    }
    let mut active_matches_boundary = true;
    for a in &active_sets {
        let sa = image_subspace(&inst.x, &inst.d, a, &opts.tols)?;
        if !linalg::subspaces_equal(&sa, &b_spaces[0], &cmp_tols)? {
            active_matches_boundary = false;
            notes.push(format!(
                "active-set subspace {a:?} differs from the boundary-set subspace"
            ));
        }
    }
    let subspace_dim = if all_pairwise_equal {
        Some(b_spaces[0].dim())
    } else {
        None
    };

    Ok(InvarianceReport {
        boundary_sets,
        active_sets,
        single_boundary_set,
        subspace_dim,
        all_pairwise_equal,
        active_matches_boundary,
        vertices_sampled,
        notes,
    })
}

/// Sensitivity map of a solved pattern `(A, B)`: with `P` the orthogonal
/// projector onto `null(D_-B)` and `W = null(X) ∩ null(D_-B)`,
///
/// ```text
///   M = proj[(D_{B\A} W)^perp] · D_{B\A} · (X P)^+
/// ```
///
/// a `|B \ A| x n` matrix. Responses whose fitted predictor lies in
/// `null(M)` while `M != 0` sit on the exceptional set where the
/// boundary/active pattern is not locally stable. When `A = B` the map is
/// the empty (zero) matrix by convention.
pub fn compute_m(
    a_set: &[usize],
    b_set: &[usize],
    x: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tols: &NumericTolerances,
) -> Result<DMatrix<f64>> {
    tols.validate()?;
    if x.ncols() != d.ncols() {
        return Err(Error::DimensionMismatch(
            "sensitivity map: X and D must have the same column count".into(),
        ));
    }
    let m = d.nrows();
    for &i in b_set.iter().chain(a_set.iter()) {
        if i >= m {
            return Err(Error::InvalidInput(format!(
                "index {i} out of range for {m} penalty rows"
            )));
        }
    }
    let b_lookup: std::collections::HashSet<usize> = b_set.iter().copied().collect();
    if let Some(&bad) = a_set.iter().find(|i| !b_lookup.contains(i)) {
        return Err(Error::InvalidInput(format!(
            "active index {bad} is not in the boundary set"
        )));
    }
    let a_lookup: std::collections::HashSet<usize> = a_set.iter().copied().collect();
    let diff: Vec<usize> = b_set
        .iter()
        .copied()
        .filter(|i| !a_lookup.contains(i))
        .collect();
    let n = x.nrows();
    if diff.is_empty() {
        return Ok(DMatrix::zeros(0, n));
    }

    let comp = linalg::complement_indices(m, b_set);
    let d_neg = linalg::row_submatrix(d, &comp)?;
    let u = linalg::null_space_basis(&d_neg, tols)?;
    let p_u = u.projector();
    let xp = x * p_u;
    let xp_pinv = linalg::pseudo_inverse(&xp, tols)?;
    let d_diff = linalg::row_submatrix(d, &diff)?;

    let w = linalg::null_intersection_basis(x, &d_neg, tols)?;
    let p_perp = if w.is_trivial() {
        DMatrix::identity(diff.len(), diff.len())
    } else {
        let image = &d_diff * &w.basis;
        let img_space = linalg::col_space_basis(&image, tols)?;
        DMatrix::identity(diff.len(), diff.len()) - img_space.projector()
    };
    Ok(p_perp * d_diff * xp_pinv)
}
