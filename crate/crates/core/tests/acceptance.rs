//! Acceptance gate: one test per release criterion.
//!
//! Each test prints exactly one line of the form
//! `ACCEPTANCE <k> <name>: PASS` (or `FAIL (<detail>)`) and then asserts,
//! so `cargo test --test acceptance -- --nocapture` reads as a checklist.
//! Expected values come from independent oracles computed inside this file
//! (closed forms, brute-force searches, direct SVD/LP reconstructions), not
//! from the library code under test.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};

use genlasso::certify::{
    self, CertifyOptions, DgpCase, DgpOptions, DgpViolation, UniquenessVerdict,
};
use genlasso::experiments::{
    local_stability_probe, monte_carlo_uniqueness, subspace_invariance_probe, InvarianceOptions,
    StabilityOptions, TrialConfig,
};
use genlasso::linalg::NumericTolerances;
use genlasso::lp::{solve_lp, Cmp, LpOutcome, LpProblem};
use genlasso::penalty;
use genlasso::solver_glm::{
    self, bregman_project_affine, existence_check, fit_from_boundary_glm, stiemke_alternative,
    ExistenceVerdict, GlmProblem, GlmSolveOptions, LossFamily, StiemkeOutcome,
};
use genlasso::solver_sq::{self, fit_from_boundary, ProblemInstance, SolveOptions};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Prints the single checklist line for a criterion and asserts it.
fn report(k: usize, name: &str, pass: bool, detail: &str) {
    if pass {
        println!("ACCEPTANCE {k} {name}: PASS ({detail})");
    } else {
        println!("ACCEPTANCE {k} {name}: FAIL ({detail})");
    }
    assert!(pass, "acceptance criterion {k} ({name}) failed: {detail}");
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Column submatrix by index list.
fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Minimum-norm least-squares solution of `A c ~ b` via the normal equations
/// and a symmetric eigendecomposition of the Gram matrix. Independent of the
/// library's linear-algebra wrappers, and more reliable than nalgebra's
/// `SVD::solve`, whose singular vectors can be off by ~1e-7 on some exactly
/// rank-deficient inputs. The matrices here are tiny and well-scaled, so the
/// squared conditioning of the normal equations is harmless.
fn gram_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eig = nalgebra::SymmetricEigen::new(a.transpose() * a);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * (1.0 + lmax);
    let atb = a.transpose() * b;
    let mut c = DVector::zeros(a.ncols());
    for j in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[j] > tol {
            let v = eig.eigenvectors.column(j);
            c += v * (v.dot(&atb) / eig.eigenvalues[j]);
        }
    }
    c
}

/// Least-squares residual `min_c ||A c - b||_inf` (independent oracle).
fn lstsq_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    if a.ncols() == 0 {
        return b.amax();
    }
    (a * gram_lstsq(a, b) - b).amax()
}

/// Orthonormal null-space basis of `m` via an eigendecomposition of the Gram
/// matrix (independent oracle); returns an `ncols x k` matrix whose columns
/// span `null(m)`.
fn svd_null_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let p = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(p, p);
    }
    let eig = nalgebra::SymmetricEigen::new(m.transpose() * m);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * (1.0 + lmax);
    let cols: Vec<usize> = (0..p).filter(|&j| eig.eigenvalues[j] <= tol).collect();
    DMatrix::from_fn(p, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|t| t.abs()).sum()
}

fn squared_criterion(inst: &ProblemInstance, beta: &DVector<f64>) -> f64 {
    let r = &inst.y - &inst.x * beta;
    0.5 * r.norm_squared() + inst.lambda * l1(&(&inst.d * beta))
}

// ---------------------------------------------------------------------------
// 1. Soft-thresholding oracle
// ---------------------------------------------------------------------------

#[test]
fn a01_soft_threshold_oracle() {
    let started = Instant::now();
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + k);
        let p = rng.random_range(1..=12);
        let y = gaussian_vector(&mut rng, p) * 3.0;
        let lambda = rng.random_range(0.1..2.0);
        let inst = ProblemInstance::new(
            y.clone(),
            DMatrix::identity(p, p),
            DMatrix::identity(p, p),
            lambda,
        )
        .unwrap();
        let res = solver_sq::solve(&inst, &SolveOptions::default()).unwrap();
        for i in 0..p {
            let oracle = y[i].signum() * (y[i].abs() - lambda).max(0.0);
            worst = worst.max((res.beta[i] - oracle).abs());
        }
    }
    let elapsed = started.elapsed();
    let pass = worst <= 1e-8 && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        "soft-threshold-oracle",
        pass,
        &format!(
            "100 instances, max |beta - soft_threshold(y)| = {worst:.2e}, {:.0} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Fit and penalty agree across jittered re-solves
// ---------------------------------------------------------------------------

#[test]
fn a02_fit_and_penalty_agree_across_resolves() {
    let mut worst_fit = 0.0_f64;
    let mut worst_pen = 0.0_f64;
    let configs: [(Option<f64>, f64, Option<u64>); 5] = [
        (None, 1.5, None),
        (Some(0.5), 1.0, Some(11)),
        (Some(2.0), 1.8, Some(12)),
        (Some(1.0), 1.2, Some(13)),
        (None, 1.9, Some(14)),
    ];
    for k in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + k);
        // Mix of shapes: tall full-rank, duplicated-column rank-deficient,
        // and wide p > n designs.
        let (x, d, lambda) = match k % 10 {
            0..=3 => {
                let x = gaussian_matrix(&mut rng, 8, 5);
                (x, penalty::build_named("diff:1", 5, None).unwrap(), 0.5)
            }
            4..=6 => {
                let mut x = gaussian_matrix(&mut rng, 6, 4);
                let c0 = x.column(0).into_owned();
                x.set_column(3, &c0);
                (x, DMatrix::identity(4, 4), 1.0)
            }
            _ => {
                let x = gaussian_matrix(&mut rng, 4, 7);
                (x, DMatrix::identity(7, 7), 0.5)
            }
        };
        let y = gaussian_vector(&mut rng, x.nrows()) * 2.0;
        let inst = ProblemInstance::new(y, x, d, lambda).unwrap();
        let mut fits: Vec<DVector<f64>> = Vec::new();
        let mut pens: Vec<f64> = Vec::new();
        for (rho, over_relaxation, init_seed) in configs {
            let opts = SolveOptions {
                rho,
                over_relaxation,
                init_seed,
                ..SolveOptions::default()
            };
            let res = solver_sq::solve(&inst, &opts).unwrap();
            pens.push(l1(&(&inst.d * &res.beta)));
            fits.push(res.fit);
        }
        for a in 0..fits.len() {
            for b in a + 1..fits.len() {
                worst_fit = worst_fit.max((&fits[a] - &fits[b]).amax());
                worst_pen = worst_pen.max((pens[a] - pens[b]).abs());
            }
        }
    }
    let pass = worst_fit < 1e-6 && worst_pen < 1e-6;
    report(
        2,
        "fit-penalty-uniqueness",
        pass,
        &format!(
            "50 instances x 5 re-solves, max fit discrepancy {worst_fit:.2e}, \
             max penalty discrepancy {worst_pen:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Boundary-pattern fit reconstruction matches the solver
// ---------------------------------------------------------------------------

#[test]
fn a03_boundary_pattern_reconstructs_fit() {
    let tols = NumericTolerances::default();
    let mut worst_sq = 0.0_f64;
    let mut worst_glm = 0.0_f64;

    for k in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + k);
        let (x, d) = match k % 3 {
            0 => (
                gaussian_matrix(&mut rng, 8, 5),
                penalty::build_named("diff:1", 5, None).unwrap(),
            ),
            1 => (gaussian_matrix(&mut rng, 6, 4), DMatrix::identity(4, 4)),
            _ => (gaussian_matrix(&mut rng, 4, 6), DMatrix::identity(6, 6)),
        };
        let y = gaussian_vector(&mut rng, x.nrows()) * 2.0;
        let lambda = rng.random_range(0.2..1.5);
        let inst = ProblemInstance::new(y, x, d, lambda).unwrap();
        let res = solver_sq::solve(&inst, &SolveOptions::default()).unwrap();
        let from_b = fit_from_boundary(&inst, &res.boundary_set, &res.boundary_signs, &tols)
            .unwrap();
        let from_a =
            fit_from_boundary(&inst, &res.active_set, &res.active_signs, &tols).unwrap();
        worst_sq = worst_sq.max((&from_b - &res.fit).amax());
        worst_sq = worst_sq.max((&from_a - &res.fit).amax());
    }

    for k in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_500 + k);
        let loss = if k % 2 == 0 {
            LossFamily::Logistic
        } else {
            LossFamily::Poisson
        };
        let x = gaussian_matrix(&mut rng, 6, 3);
        let y = match loss {
            LossFamily::Logistic => uniform_vector(&mut rng, 6, 0.05, 0.95),
            _ => uniform_vector(&mut rng, 6, 0.5, 3.0),
        };
        let inst = GlmProblem::new(y, x, DMatrix::identity(3, 3), 0.3, loss).unwrap();
        let res = solver_glm::solve_glm(&inst, &GlmSolveOptions::default()).unwrap();
        let from_b =
            fit_from_boundary_glm(&inst, &res.boundary_set, &res.boundary_signs, &tols).unwrap();
        let from_a =
            fit_from_boundary_glm(&inst, &res.active_set, &res.active_signs, &tols).unwrap();
        worst_glm = worst_glm.max((&from_b.fit - &res.fit).amax());
        worst_glm = worst_glm.max((&from_a.fit - &res.fit).amax());
    }

    let pass = worst_sq < 1e-6 && worst_glm < 1e-6;
    report(
        3,
        "implicit-fit-equivalence",
        pass,
        &format!(
            "100 squared + 50 curved-family instances, boundary- and active-pattern \
             reconstructions; max squared deviation {worst_sq:.2e}, max curved {worst_glm:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Almost-sure uniqueness across the named penalty families
// ---------------------------------------------------------------------------

#[test]
fn a04_random_designs_certify_unique_across_penalty_families() {
    let started = Instant::now();
    // (penalty builder, n, p) — all with p <= 2n and nullity(D) <= n.
    let cases: [(&str, usize, usize); 6] = [
        ("identity", 4, 8),
        ("diff:1", 4, 7),
        ("diff:2", 5, 8),
        ("graph", 3, 6),
        ("gtf:2", 5, 7),
        ("ktf:3,2,0", 5, 9),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (idx, (name, n, p)) in cases.iter().enumerate() {
        let cfg = TrialConfig {
            n: *n,
            p: *p,
            penalty: (*name).to_string(),
            loss: LossFamily::Squared,
            lambda: 0.5,
            trials: 200,
            seed: 401 + idx as u64,
            perturbation_eps: 1e-3,
            ensemble: "gaussian".to_string(),
        };
        let summary = monte_carlo_uniqueness(&cfg).unwrap();
        let ok = summary.model.non_unique == 0 && summary.model.undetermined <= 4;
        pass &= ok;
        detail.push_str(&format!(
            "{name}: {}u/{}n/{}d; ",
            summary.model.unique, summary.model.non_unique, summary.model.undetermined
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    detail.push_str(&format!("200 trials each, {elapsed:.1} s"));
    report(4, "random-design-uniqueness", pass, &detail);
}

// ---------------------------------------------------------------------------
// 5. Duplicated-column instances are detected as non-unique
// ---------------------------------------------------------------------------

/// Verifies a returned non-uniqueness witness from scratch: distinct point,
/// equal fit, equal penalty, equal criterion, and subgradient-valid at both
/// points.
fn witness_verifies(inst: &ProblemInstance, report: &certify::CertifyReport) -> bool {
    let Some(sol) = report.solution.as_ref() else {
        return false;
    };
    let Some(w) = report.certificate.witness.as_ref() else {
        return false;
    };
    let beta1 = &sol.beta;
    let beta2 = &w.second_solution;
    if (beta2 - beta1).amax() <= 1e-9 {
        return false;
    }
    let fit1 = &inst.x * beta1;
    let fit2 = &inst.x * beta2;
    if (&fit2 - &fit1).amax() > 1e-8 * (1.0 + fit1.amax()) {
        return false;
    }
    let pen1 = l1(&(&inst.d * beta1));
    let pen2 = l1(&(&inst.d * beta2));
    if (pen2 - pen1).abs() > 1e-8 * (1.0 + pen1) {
        return false;
    }
    let crit1 = squared_criterion(inst, beta1);
    let crit2 = squared_criterion(inst, beta2);
    if (crit2 - crit1).abs() > 1e-8 * (1.0 + crit1.abs()) {
        return false;
    }
    // Stationarity with the solver's subgradient (fits are equal, so one
    // check covers both points), then subgradient validity at each point.
    let gamma = &sol.gamma;
    let stat = (inst.x.transpose() * (&inst.y - &fit1)
        - inst.d.transpose() * gamma * inst.lambda)
        .amax();
    if stat > 1e-6 * (1.0 + inst.lambda) {
        return false;
    }
    for beta in [beta1, beta2] {
        let db = &inst.d * beta;
        for i in 0..db.len() {
            if db[i].abs() > 1e-8 {
                if (gamma[i] - db[i].signum()).abs() > 1e-6 {
                    return false;
                }
            } else if gamma[i].abs() > 1.0 + 1e-9 {
                return false;
            }
        }
    }
    true
}

#[test]
fn a05_duplicated_columns_are_flagged_non_unique() {
    // Route 1: 50 instances constructed here, certified one by one, each
    // returned witness re-verified from scratch.
    let (n, p, lambda) = (6_usize, 4_usize, 0.4_f64);
    let copts = CertifyOptions::default();
    let mut non_unique = 0_usize;
    let mut undetermined = 0_usize;
    let mut unique = 0_usize;
    let mut verified = 0_usize;
    for k in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(5_000 + k);
        let mut x = gaussian_matrix(&mut rng, n, p);
        let c0 = x.column(0).into_owned();
        x.set_column(p - 1, &c0);
        // Data built around a planted optimal pair: a dual vector with both
        // duplicated coordinates on the boundary, realized through the row
        // space of X, plus signal on the shared column.
        let mut gamma_t = DVector::zeros(p);
        gamma_t[0] = 1.0;
        gamma_t[p - 1] = 1.0;
        for j in 1..p - 1 {
            gamma_t[j] = rng.random_range(-0.9..0.9);
        }
        let xt = x.transpose();
        let rhs = &gamma_t * lambda;
        let r = gram_lstsq(&xt, &rhs);
        let defect = (&xt * &r - &rhs).amax();
        assert!(
            defect <= 1e-8,
            "planted dual vector must be realizable (defect {defect:.3e}, k = {k})"
        );
        let y = x.column(0) * 2.0 + r;
        let inst = ProblemInstance::new(y, x, DMatrix::identity(p, p), lambda).unwrap();
        let rep = certify::certify_uniqueness(
            &GlmProblem::new(
                inst.y.clone(),
                inst.x.clone(),
                inst.d.clone(),
                inst.lambda,
                LossFamily::Squared,
            )
            .unwrap(),
            &copts,
        )
        .unwrap();
        match rep.certificate.verdict {
            UniquenessVerdict::NonUnique => {
                non_unique += 1;
                if witness_verifies(&inst, &rep) {
                    verified += 1;
                }
            }
            UniquenessVerdict::Undetermined => undetermined += 1,
            UniquenessVerdict::Unique => unique += 1,
        }
    }
    let route1 = unique == 0 && verified == non_unique && non_unique >= 48;

    // Route 2: the shipped trial ensemble reports the same tallies.
    let cfg = TrialConfig {
        n,
        p,
        penalty: "identity".to_string(),
        loss: LossFamily::Squared,
        lambda,
        trials: 50,
        seed: 505,
        perturbation_eps: 1e-3,
        ensemble: "duplicated_column".to_string(),
    };
    let mc = monte_carlo_uniqueness(&cfg).unwrap();
    let route2 = mc.model.unique == 0 && mc.model.non_unique >= 48;

    report(
        5,
        "non-uniqueness-detection",
        route1 && route2,
        &format!(
            "constructed: {non_unique} non-unique ({verified} witnesses verified), \
             {undetermined} undetermined, {unique} unique; \
             ensemble run: {}u/{}n/{}d",
            mc.model.unique, mc.model.non_unique, mc.model.undetermined
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Combinatorial position checker
// ---------------------------------------------------------------------------

/// Re-verifies a reported violation for `D = I` from scratch. With the
/// identity penalty the transformed columns are `Z = X[:, B]` and the
/// sign-weights equal the boundary signs, so the reported tuple can be
/// checked by a direct least-squares membership test.
fn violation_reverifies(x: &DMatrix<f64>, v: &DgpViolation) -> bool {
    let z = columns(x, &v.boundary_set);
    let tol = 1e-6;
    match v.case {
        DgpCase::Span => {
            // tuple = [lead, i2, spanning...]; degenerate zero-column forms
            // are [i] or [lead, i].
            if v.tuple.len() == 1 {
                return z.column(v.tuple[0]).amax() <= tol;
            }
            let target = z.column(v.tuple[1]).into_owned();
            let rest = &v.tuple[2..];
            if rest.is_empty() {
                return target.amax() <= tol;
            }
            let a = columns(&z, rest);
            lstsq_residual(&a, &target) <= tol * (1.0 + target.amax())
        }
        DgpCase::Affine => {
            // tuple = [i1, members...]; with D = I every sign-weight is ±1,
            // so all members participate affinely (no span part). Membership
            // in an affine hull with a sum-to-one constraint is tested by
            // parameterizing coefficients as e_1 + sum_k w_k (e_k - e_1).
            let i1 = v.tuple[0];
            let members = &v.tuple[1..];
            if members.is_empty() {
                return false;
            }
            let target = z.column(i1) / v.signs[i1];
            let cols: Vec<DVector<f64>> = members
                .iter()
                .map(|&j| z.column(j) / v.signs[j])
                .collect();
            let base = &cols[0];
            let gap = target - base;
            let diffs = DMatrix::from_fn(z.nrows(), cols.len() - 1, |r, c| {
                cols[c + 1][r] - base[r]
            });
            if diffs.ncols() == 0 {
                return gap.amax() <= tol;
            }
            lstsq_residual(&diffs, &gap) <= tol * (1.0 + gap.amax())
        }
    }
}

#[test]
fn a06_position_checker_finds_planted_degeneracies() {
    let opts = DgpOptions::default();

    // Random designs: continuous draws must pass.
    let mut random_pass = 0_usize;
    for k in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(6_000 + k);
        let n = rng.random_range(2..=3);
        let p = rng.random_range(2..=4);
        let x = gaussian_matrix(&mut rng, n, p);
        let d = if k % 5 == 0 && p >= 2 {
            penalty::build_named("diff:1", p, None).unwrap()
        } else {
            DMatrix::identity(p, p)
        };
        let rep = certify::dgp_check_exhaustive(&x, &d, &opts).unwrap();
        if rep.in_position {
            random_pass += 1;
        }
    }

    // Planted degeneracies: duplicated columns, zero columns, affinely
    // placed columns. All with D = I so the report re-verifies directly.
    let mut found = 0_usize;
    let mut reverified = 0_usize;
    for k in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(6_500 + k);
        let n = 2 + (k as usize % 2);
        let p = 3 + (k as usize % 2);
        let mut x = gaussian_matrix(&mut rng, n, p);
        match k % 3 {
            0 => {
                let c0 = x.column(0).into_owned();
                x.set_column(p - 1, &c0);
            }
            1 => {
                x.set_column(1, &DVector::zeros(n));
            }
            _ => {
                let c = x.column(0) * 2.0 - x.column(1);
                x.set_column(p - 1, &c);
            }
        }
        let d = DMatrix::identity(p, p);
        let rep = certify::dgp_check_exhaustive(&x, &d, &opts).unwrap();
        if !rep.in_position {
            found += 1;
            let v = rep.violation.expect("violation record expected");
            if violation_reverifies(&x, &v) {
                reverified += 1;
            }
        }
    }

    let pass = random_pass == 100 && found == 20 && reverified == 20;
    report(
        6,
        "position-checker",
        pass,
        &format!(
            "{random_pass}/100 random designs in position; {found}/20 planted \
             degeneracies found, {reverified}/20 reports re-verified"
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Existence checks against brute-force oracles
// ---------------------------------------------------------------------------

/// Deterministic direction grid on the unit sphere in R^p (p <= 3).
fn direction_grid(p: usize) -> Vec<DVector<f64>> {
    match p {
        1 => vec![
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-1.0]),
        ],
        2 => (0..1440)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / 1440.0;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let n = 20_000;
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / (n as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * (k as f64) / golden;
                    DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => unreachable!("grid oracle only covers p <= 3"),
    }
}

/// Brute-force separation oracle: max-min margin of `rows * b` over unit
/// directions, coarse grid plus deterministic local refinement.
fn best_min_margin(rows: &DMatrix<f64>) -> f64 {
    let p = rows.ncols();
    let mut best_dir = DVector::zeros(p);
    let mut best = f64::NEG_INFINITY;
    for b in direction_grid(p) {
        let m = (rows * &b).min();
        if m > best {
            best = m;
            best_dir = b;
        }
    }
    // Coordinate-wise refinement with a shrinking step.
    let mut step = 0.1;
    while step > 1e-7 {
        let mut improved = false;
        for j in 0..p {
            for sgn in [1.0, -1.0] {
                let mut cand = best_dir.clone();
                cand[j] += sgn * step;
                let norm = cand.norm();
                if norm <= 1e-12 {
                    continue;
                }
                cand /= norm;
                let m = (rows * &cand).min();
                if m > best {
                    best = m;
                    best_dir = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

#[test]
fn a07_existence_checks_match_brute_force() {
    // Logistic at lambda = 0 versus grid separation search.
    let mut logit_agree = 0_usize;
    let mut logit_sep = 0_usize;
    for k in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + k);
        let n = 4 + (k as usize % 4);
        let p = 1 + (k as usize % 3);
        let x = gaussian_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
        let rep = existence_check(&x, &y, None, 0.0, LossFamily::Logistic).unwrap();
        // Quasicomplete separation <=> some direction keeps every signed
        // margin nonnegative (and the direction is nonzero). The max-min
        // margin over the sphere is > 0 for complete separation and exactly
        // 0 for quasicomplete-but-not-complete; generic continuous designs
        // give a strictly positive or strictly negative value.
        let signed = DMatrix::from_fn(n, p, |r, c| (2.0 * y[r] - 1.0) * x[(r, c)]);
        let margin = best_min_margin(&signed);
        let separated = margin > 1e-9;
        if separated {
            logit_sep += 1;
        }
        let agree = match rep.verdict {
            ExistenceVerdict::Violated => separated,
            ExistenceVerdict::Guaranteed => !separated,
            ExistenceVerdict::NotGuaranteed => false,
        };
        if agree {
            logit_agree += 1;
        }
    }

    // Poisson at lambda = 0 versus a direct margin LP over y + null(X^T).
    let mut pois_agree = 0_usize;
    let mut pois_exists = 0_usize;
    for k in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_500 + k);
        let n = 4 + (k as usize % 3);
        let p = 2 + (k as usize % 2);
        let x = gaussian_matrix(&mut rng, n, p);
        let pois = Poisson::new(1.0).unwrap();
        let y = DVector::from_fn(n, |_, _| rng.sample(pois));
        let rep = existence_check(&x, &y, None, 0.0, LossFamily::Poisson).unwrap();
        // maximize t subject to y + N w >= t, bounded w; exists iff t* > 0.
        let nbasis = svd_null_basis(&x.transpose());
        let q = nbasis.ncols();
        let mut lp = LpProblem::new(q + 1);
        lp.objective = vec![0.0; q + 1];
        lp.objective[q] = -1.0; // minimize -t
        lp.bounds = vec![(-1e3, 1e3); q + 1];
        lp.bounds[q] = (0.0, 1.0);
        for i in 0..n {
            let mut coeffs = vec![0.0; q + 1];
            for j in 0..q {
                coeffs[j] = nbasis[(i, j)];
            }
            coeffs[q] = -1.0;
            lp.push(coeffs, Cmp::Ge, -y[i]);
        }
        let exists_lp = match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal { value, .. } => -value > 1e-9,
            LpOutcome::Unbounded => true,
            LpOutcome::Infeasible => false,
        };
        if exists_lp {
            pois_exists += 1;
        }
        let agree = match rep.verdict {
            ExistenceVerdict::Violated => !exists_lp,
            ExistenceVerdict::Guaranteed => exists_lp,
            ExistenceVerdict::NotGuaranteed => false,
        };
        if agree {
            pois_agree += 1;
        }
    }

    // lambda > 0 with D = I: always guaranteed, every family.
    let mut penalized_ok = 0_usize;
    for k in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_800 + k);
        let n = 5;
        let p = 3;
        let x = gaussian_matrix(&mut rng, n, p);
        let d = DMatrix::identity(p, p);
        let lambda = rng.random_range(0.1..1.0);
        let (family, y) = match k % 3 {
            0 => (LossFamily::Squared, gaussian_vector(&mut rng, n)),
            1 => (LossFamily::Logistic, DVector::from_fn(n, |_, _| {
                if rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                }
            })),
            _ => {
                let pois = Poisson::new(1.0).unwrap();
                (LossFamily::Poisson, DVector::from_fn(n, |_, _| rng.sample(pois)))
            }
        };
        let rep = existence_check(&x, &y, Some(&d), lambda, family).unwrap();
        if rep.verdict == ExistenceVerdict::Guaranteed {
            penalized_ok += 1;
        }
    }

    // Strict-sign alternative: exactly one side, with a verified witness.
    let mut stiemke_ok = 0_usize;
    let mut strict_side = 0_usize;
    for k in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_900 + k);
        let p = 1 + (k as usize % 4);
        let n = 1 + (k as usize % 5);
        let a = gaussian_matrix(&mut rng, p, n);
        let scale = 1.0 + a.amax();
        match stiemke_alternative(&a).unwrap() {
            StiemkeOutcome::StrictNullCombination(xv) => {
                strict_side += 1;
                let null_ok = (&a * &xv).amax() <= 1e-8 * scale;
                let strict = xv.iter().all(|&t| t < 0.0);
                let norm_ok = (l1(&xv) - 1.0).abs() <= 1e-8;
                if null_ok && strict && norm_ok {
                    stiemke_ok += 1;
                }
            }
            StiemkeOutcome::SeparatingDirection(b) => {
                let c = a.transpose() * &b;
                let nonneg = c.iter().all(|&t| t >= -1e-10 * scale);
                let nonzero = c.amax() > 1e-8 * scale;
                if nonneg && nonzero {
                    stiemke_ok += 1;
                }
            }
        }
    }

    let pass =
        logit_agree == 100 && pois_agree == 60 && penalized_ok == 30 && stiemke_ok == 200;
    report(
        7,
        "existence-checks",
        pass,
        &format!(
            "logistic grid agreement {logit_agree}/100 ({logit_sep} separated); \
             margin-LP agreement {pois_agree}/60 ({pois_exists} attained); \
             penalized identity {penalized_ok}/30 guaranteed; \
             alternative witnesses {stiemke_ok}/200 ({strict_side} strict-null side)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Bregman projection
// ---------------------------------------------------------------------------

#[test]
fn a08_bregman_projection_matches_oracles() {
    let tols = NumericTolerances::default();
    let mut worst_sq = 0.0_f64;
    for k in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(8_000 + k);
        let n = 6;
        let anchor = gaussian_vector(&mut rng, n) * 2.0;
        let offset = gaussian_vector(&mut rng, n);
        let span = gaussian_matrix(&mut rng, n, 2);
        let dirs = genlasso::linalg::col_space_basis(&span, &tols).unwrap();
        let proj =
            bregman_project_affine(LossFamily::Squared, &anchor, &offset, &dirs, &tols).unwrap();
        // Euclidean oracle: offset + V c, c the least-squares coefficient.
        let diff = &anchor - &offset;
        let c = gram_lstsq(&dirs.basis, &diff);
        let oracle = &offset + &dirs.basis * c;
        worst_sq = worst_sq.max((&proj.point - &oracle).amax());
    }

    let mut worst_glm = 0.0_f64;
    for k in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(8_500 + k);
        let family = if k % 2 == 0 {
            LossFamily::Logistic
        } else {
            LossFamily::Poisson
        };
        let n = 5;
        let (anchor, interior) = match family {
            LossFamily::Logistic => (
                uniform_vector(&mut rng, n, 0.1, 0.9),
                uniform_vector(&mut rng, n, 0.15, 0.85),
            ),
            _ => (
                uniform_vector(&mut rng, n, 0.3, 3.0),
                uniform_vector(&mut rng, n, 0.4, 2.5),
            ),
        };
        // The affine set passes through an interior point so the projection
        // exists.
        let span = gaussian_matrix(&mut rng, n, 2);
        let dirs = genlasso::linalg::col_space_basis(&span, &tols).unwrap();
        let offset = interior;
        let proj = bregman_project_affine(family, &anchor, &offset, &dirs, &tols).unwrap();
        // Optimality: the conjugate-gradient difference is orthogonal to the
        // affine directions, and the point lies on the affine set.
        let g = proj.point.map(|w| family.grad_psi_conj(w))
            - anchor.map(|w| family.grad_psi_conj(w));
        let tangential = (dirs.basis.transpose() * g).amax();
        let off = &proj.point - &offset;
        let feasibility = lstsq_residual(&dirs.basis, &off);
        worst_glm = worst_glm.max(tangential).max(feasibility);
    }

    let pass = worst_sq <= 1e-8 && worst_glm < 1e-8;
    report(
        8,
        "bregman-projection",
        pass,
        &format!(
            "50 squared cases vs Euclidean oracle (max dev {worst_sq:.2e}); \
             50 curved cases, max optimality residual {worst_glm:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Local stability of the boundary pattern
// ---------------------------------------------------------------------------

#[test]
fn a09_certified_unique_instances_are_locally_stable() {
    let families = [LossFamily::Squared, LossFamily::Logistic, LossFamily::Poisson];
    let copts = CertifyOptions::default();
    let mut detail = String::new();
    let mut pass = true;
    for (fi, family) in families.iter().enumerate() {
        let mut tested = 0_usize;
        let mut stable = 0_usize;
        let mut excluded = 0_usize;
        let mut attempt = 0_u64;
        while tested + excluded < 50 && attempt < 400 {
            let mut rng = ChaCha8Rng::seed_from_u64(9_000 + 1_000 * fi as u64 + attempt);
            attempt += 1;
            let (n, p, lambda) = (7_usize, 3_usize, 0.3_f64);
            let x = gaussian_matrix(&mut rng, n, p);
            let y = match family {
                LossFamily::Squared => gaussian_vector(&mut rng, n) * 2.0,
                LossFamily::Logistic => uniform_vector(&mut rng, n, 0.05, 0.95),
                LossFamily::Poisson => uniform_vector(&mut rng, n, 0.5, 3.0),
            };
            let inst =
                GlmProblem::new(y, x, DMatrix::identity(p, p), lambda, *family).unwrap();
            let rep = certify::certify_uniqueness(&inst, &copts).unwrap();
            if rep.certificate.verdict != UniquenessVerdict::Unique {
                continue;
            }
            let sopts = StabilityOptions {
                seed: attempt,
                ..StabilityOptions::default()
            };
            let sr = local_stability_probe(&inst, &sopts).unwrap();
            if sr.near_exceptional {
                excluded += 1;
                continue;
            }
            tested += 1;
            if sr.stable {
                stable += 1;
            }
        }
        pass &= stable == tested && tested + excluded == 50;
        detail.push_str(&format!(
            "{family:?}: {stable}/{tested} stable ({excluded} excluded); "
        ));
    }
    report(9, "local-stability", pass, detail.trim_end_matches("; "));
}

// ---------------------------------------------------------------------------
// 10. Boundary-set invariance of the fitted subspace
// ---------------------------------------------------------------------------

#[test]
fn a10_harvested_boundary_sets_span_one_subspace() {
    let mut multi = 0_usize;
    let mut consistent = true;
    for k in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + k);
        let (n, p) = (5_usize, 4_usize);
        let x = gaussian_matrix(&mut rng, n, p);
        let y = gaussian_vector(&mut rng, n) * 2.0;
        // Row-rank-deficient penalty: each first-difference row duplicated.
        let base = penalty::build_named("diff:1", p, None).unwrap();
        let mut d = DMatrix::zeros(2 * base.nrows(), p);
        for r in 0..base.nrows() {
            for c in 0..p {
                d[(2 * r, c)] = base[(r, c)];
                d[(2 * r + 1, c)] = base[(r, c)];
            }
        }
        let inst = GlmProblem::new(y, x, d, 0.6, LossFamily::Squared).unwrap();
        let opts = InvarianceOptions {
            runs: 12,
            seed: k,
            ..InvarianceOptions::default()
        };
        let rep = subspace_invariance_probe(&inst, &opts).unwrap();
        if rep.boundary_sets.len() >= 2 {
            multi += 1;
            consistent &= rep.all_pairwise_equal && rep.active_matches_boundary;
        }
    }
    let pass = consistent && multi >= 1;
    report(
        10,
        "subspace-invariance",
        pass,
        &format!(
            "{multi}/20 instances harvested >= 2 boundary sets; all of those agree \
             pairwise and active-derived subspaces match"
        ),
    );
}

// ---------------------------------------------------------------------------
// 11. CLI byte-for-byte reproducibility
// ---------------------------------------------------------------------------

#[test]
fn a11_cli_runs_are_byte_identical() {
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, content: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path.to_string_lossy().into_owned()
    };
    let x = write("x.txt", "4 3\n1 0.5 0\n0 1 0.2\n0.3 0 1\n0.1 0.2 0.3\n");
    let y = write("y.txt", "4 1\n2.0\n-1.0\n0.5\n1.5\n");
    let yb = write("yb.txt", "4 1\n1\n0\n1\n0\n");
    let cfg = write(
        "mc.json",
        r#"{"n":4,"p":3,"penalty":"identity","loss":"squared","lambda":0.5,
           "trials":6,"seed":7,"perturbation_eps":0.001}"#,
    );
    let solved = dir.path().join("solved.json").to_string_lossy().into_owned();

    let invocations: Vec<Vec<String>> = vec![
        vec![
            "solve", "--X", &x, "--y", &y, "--D", "identity", "--lambda", "0.4", "--seed", "3",
        ],
        vec!["solve-glm", "--X", &x, "--y", &yb, "--D", "identity", "--lambda", "0.3", "--loss",
             "logistic"],
        vec!["certify", "--X", &x, "--y", &y, "--D", "diff:1", "--lambda", "0.5"],
        vec!["dgp-check", "--X", &x, "--D", "identity"],
        vec!["exist-check", "--X", &x, "--y", &yb, "--loss", "logistic", "--lambda", "0"],
        vec!["mc-unique", "--config", &cfg],
        vec!["stability", "--X", &x, "--y", &y, "--D", "identity", "--lambda", "0.4", "--seed",
             "5"],
        vec!["invariance", "--X", &x, "--y", &y, "--D", "diff:1", "--lambda", "0.5", "--seed",
             "2", "--runs", "8"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    let mut all_identical = true;
    let mut checked = 0_usize;
    for args in &invocations {
        let run = || {
            let out = Command::new(env!("CARGO_BIN_EXE_genlasso"))
                .args(args)
                .output()
                .unwrap();
            out.stdout
        };
        let first = run();
        let second = run();
        all_identical &= first == second && !first.is_empty();
        checked += 1;
    }

    // A seeded solve writing to a file reproduces the file bytes too.
    let solve_to_file = |path: &str| {
        Command::new(env!("CARGO_BIN_EXE_genlasso"))
            .args([
                "solve", "--X", &x, "--y", &y, "--D", "identity", "--lambda", "0.4", "--seed",
                "9", "--out", path,
            ])
            .output()
            .unwrap();
        std::fs::read(path).unwrap()
    };
    let f1 = solve_to_file(&solved);
    let f2 = solve_to_file(&solved);
    all_identical &= f1 == f2 && !f1.is_empty();

    report(
        11,
        "cli-reproducibility",
        all_identical,
        &format!("{checked} subcommands re-run byte-identically, plus --out file bytes"),
    );
}
