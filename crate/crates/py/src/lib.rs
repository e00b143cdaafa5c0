//! Python bindings for the generalized-lasso solvers and certifiers.
//!
//! Matrices cross the boundary as nested lists of floats (row-major),
//! vectors as flat lists; results come back as plain dicts so no Python-side
//! dependencies are needed. Index sets are 0-based, matching the CLI and the
//! Rust API.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use genlasso::certify::{
    CertifyOptions, CertifyReport, DgpCase, DgpOptions, UniquenessVerdict,
};
use genlasso::experiments::{
    local_stability_probe, monte_carlo_uniqueness, subspace_invariance_probe, InvarianceOptions,
    StabilityOptions, TrialConfig, VerdictCounts,
};
use genlasso::linalg::NumericTolerances;
use genlasso::penalty::{self, GraphSpec};
use genlasso::solver_glm::{
    self, ExistenceVerdict, GlmProblem, GlmSolveOptions, LossFamily,
};
use genlasso::solver_sq::{self, KktReport, ProblemInstance, SolveOptions};

fn lib_err(e: genlasso::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!(
            "{what}: need at least one row"
        )));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(PyValueError::new_err(format!(
            "{what}: rows must not be empty"
        )));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!(
            "{what}: all rows must have the same length"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn to_vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn parse_loss(name: &str) -> PyResult<LossFamily> {
    match name {
        "squared" => Ok(LossFamily::Squared),
        "logistic" => Ok(LossFamily::Logistic),
        "poisson" => Ok(LossFamily::Poisson),
        other => Err(PyValueError::new_err(format!(
            "unknown loss `{other}` (expected squared, logistic, or poisson)"
        ))),
    }
}

fn verdict_str(v: &UniquenessVerdict) -> &'static str {
    match v {
        UniquenessVerdict::Unique => "unique",
        UniquenessVerdict::NonUnique => "non_unique",
        UniquenessVerdict::Undetermined => "undetermined",
    }
}

/// Resolves the penalty argument: either a builder name (`"identity"`,
/// `"diff:k"`, `"graph"`, `"gtf:k"`, `"ktf:N,d,k"`) or an explicit matrix as
/// nested lists. `graph` (a `{"nodes": int, "edges": [[i, j], ...]}` dict)
/// feeds the graph-based builders; the default is a path on `p` nodes.
fn resolve_penalty(
    d: &Bound<'_, PyAny>,
    p: usize,
    graph: Option<&Bound<'_, PyDict>>,
) -> PyResult<DMatrix<f64>> {
    if let Ok(name) = d.extract::<String>() {
        let spec = match graph {
            None => None,
            Some(g) => {
                let nodes: usize = g
                    .get_item("nodes")?
                    .ok_or_else(|| PyValueError::new_err("graph dict needs a `nodes` key"))?
                    .extract()?;
                let edges: Vec<(usize, usize)> = g
                    .get_item("edges")?
                    .ok_or_else(|| PyValueError::new_err("graph dict needs an `edges` key"))?
                    .extract()?;
                Some(GraphSpec::new(nodes, edges).map_err(lib_err)?)
            }
        };
        penalty::build_named(&name, p, spec.as_ref()).map_err(lib_err)
    } else if let Ok(rows) = d.extract::<Vec<Vec<f64>>>() {
        to_matrix(&rows, "penalty matrix")
    } else {
        Err(PyValueError::new_err(
            "penalty must be a builder name or a matrix as nested lists",
        ))
    }
}

fn kkt_dict<'py>(py: Python<'py>, kkt: &KktReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("stationarity_residual", kkt.stationarity_residual)?;
    d.set_item("subgradient_violation", kkt.subgradient_violation)?;
    d.set_item("feasible", kkt.feasible)?;
    Ok(d)
}

fn counts_dict<'py>(py: Python<'py>, c: &VerdictCounts) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("unique", c.unique)?;
    d.set_item("non_unique", c.non_unique)?;
    d.set_item("undetermined", c.undetermined)?;
    Ok(d)
}

fn certify_dict(py: Python<'_>, rep: &CertifyReport) -> PyResult<Py<PyDict>> {
    let cert = &rep.certificate;
    let out = PyDict::new(py);
    out.set_item("verdict", verdict_str(&cert.verdict))?;
    out.set_item("boundary_set_used", cert.boundary_set_used.clone())?;
    out.set_item("boundary_signs_used", cert.boundary_signs_used.clone())?;
    match &cert.rank_check {
        Some(rc) => {
            let d = PyDict::new(py);
            d.set_item("rank", rc.rank)?;
            d.set_item("k", rc.k)?;
            d.set_item("passed", rc.passed)?;
            out.set_item("rank_check", d)?;
        }
        None => out.set_item("rank_check", py.None())?,
    }
    out.set_item("null_intersection_dim", cert.null_intersection_dim)?;
    match &cert.witness {
        Some(w) => {
            let d = PyDict::new(py);
            d.set_item("direction", vec_of(&w.direction))?;
            d.set_item("second_solution", vec_of(&w.second_solution))?;
            d.set_item("epsilon", w.epsilon)?;
            out.set_item("witness", d)?;
        }
        None => out.set_item("witness", py.None())?,
    }
    out.set_item("notes", cert.notes.clone())?;
    match &rep.solution {
        Some(s) => {
            let d = PyDict::new(py);
            d.set_item("beta", vec_of(&s.beta))?;
            d.set_item("gamma", vec_of(&s.gamma))?;
            d.set_item("fit", vec_of(&s.fit))?;
            d.set_item("mean", vec_of(&s.mean))?;
            d.set_item("criterion_value", s.criterion_value)?;
            d.set_item("kkt", kkt_dict(py, &s.kkt)?)?;
            d.set_item("iterations", s.iterations)?;
            d.set_item("active_set", s.active_set.clone())?;
            d.set_item("active_signs", s.active_signs.clone())?;
            out.set_item("solution", d)?;
        }
        None => out.set_item("solution", py.None())?,
    }
    Ok(out.unbind())
}

/// Solve the quadratic-loss problem
/// `min 0.5 ||y - X b||^2 + lam * ||D b||_1`.
#[pyfunction]
#[pyo3(signature = (x, y, d, lam, graph=None, seed=None, max_iterations=None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    d: &Bound<'_, PyAny>,
    lam: f64,
    graph: Option<&Bound<'_, PyDict>>,
    seed: Option<u64>,
    max_iterations: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let inst = ProblemInstance::new(to_vector(&y), xm, dm, lam).map_err(lib_err)?;
    let mut opts = SolveOptions {
        init_seed: seed,
        ..SolveOptions::default()
    };
    if let Some(cap) = max_iterations {
        opts.max_iterations = cap;
    }
    let res = solver_sq::solve(&inst, &opts).map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item("beta", vec_of(&res.beta))?;
    out.set_item("gamma", vec_of(&res.gamma))?;
    out.set_item("fit", vec_of(&res.fit))?;
    out.set_item("boundary_set", res.boundary_set.clone())?;
    out.set_item("boundary_signs", res.boundary_signs.clone())?;
    out.set_item("active_set", res.active_set.clone())?;
    out.set_item("active_signs", res.active_signs.clone())?;
    out.set_item("kkt", kkt_dict(py, &res.kkt)?)?;
    out.set_item("duality_gap", res.duality_gap)?;
    out.set_item("iterations", res.iterations)?;
    out.set_item("notes", res.notes.clone())?;
    Ok(out.unbind())
}

/// Solve the curved-family problem
/// `min -y^T X b + sum psi(x_i^T b) + lam * ||D b||_1` for
/// `loss` in `{"logistic", "poisson", "squared"}`.
#[pyfunction]
#[pyo3(signature = (x, y, d, lam, loss, graph=None, seed=None, max_iterations=None))]
#[allow(clippy::too_many_arguments)]
fn solve_glm(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    d: &Bound<'_, PyAny>,
    lam: f64,
    loss: &str,
    graph: Option<&Bound<'_, PyDict>>,
    seed: Option<u64>,
    max_iterations: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let family = parse_loss(loss)?;
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let inst = GlmProblem::new(to_vector(&y), xm, dm, lam, family).map_err(lib_err)?;
    let mut opts = GlmSolveOptions {
        init_seed: seed,
        ..GlmSolveOptions::default()
    };
    if let Some(cap) = max_iterations {
        opts.max_iterations = cap;
    }
    let res = solver_glm::solve_glm(&inst, &opts).map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item("beta", vec_of(&res.beta))?;
    out.set_item("gamma", vec_of(&res.gamma))?;
    out.set_item("fit", vec_of(&res.fit))?;
    out.set_item("mean", vec_of(&res.mean))?;
    out.set_item("boundary_set", res.boundary_set.clone())?;
    out.set_item("boundary_signs", res.boundary_signs.clone())?;
    out.set_item("active_set", res.active_set.clone())?;
    out.set_item("active_signs", res.active_signs.clone())?;
    out.set_item("kkt", kkt_dict(py, &res.kkt)?)?;
    out.set_item("criterion_value", res.criterion_value)?;
    out.set_item("iterations", res.iterations)?;
    out.set_item("notes", res.notes.clone())?;
    Ok(out.unbind())
}

/// Solve and certify whether the minimizer is unique. Returns the
/// certificate (verdict, rank check, witness, ...) plus the solution used.
#[pyfunction]
#[pyo3(signature = (x, y, d, lam, loss="squared", graph=None, seed=None))]
#[allow(clippy::too_many_arguments)]
fn certify(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    d: &Bound<'_, PyAny>,
    lam: f64,
    loss: &str,
    graph: Option<&Bound<'_, PyDict>>,
    seed: Option<u64>,
) -> PyResult<Py<PyDict>> {
    let family = parse_loss(loss)?;
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let inst = GlmProblem::new(to_vector(&y), xm, dm, lam, family).map_err(lib_err)?;
    let opts = CertifyOptions {
        tols: NumericTolerances::default(),
        solve_seed: seed,
    };
    let rep = genlasso::certify::certify_uniqueness(&inst, &opts).map_err(lib_err)?;
    certify_dict(py, &rep)
}

/// Exhaustive combinatorial check that `X` avoids the span/affine
/// degeneracies relative to `D` under which uniqueness can fail.
#[pyfunction]
#[pyo3(signature = (x, d, graph=None, cap=None, seed=0))]
fn dgp_check(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    d: &Bound<'_, PyAny>,
    graph: Option<&Bound<'_, PyDict>>,
    cap: Option<usize>,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let mut opts = DgpOptions {
        seed,
        ..DgpOptions::default()
    };
    if let Some(c) = cap {
        opts.cap = c;
    }
    let rep = genlasso::certify::dgp_check_exhaustive(&xm, &dm, &opts).map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item("in_position", rep.in_position)?;
    match &rep.violation {
        Some(v) => {
            let vd = PyDict::new(py);
            vd.set_item("boundary_set", v.boundary_set.clone())?;
            vd.set_item("signs", v.signs.clone())?;
            vd.set_item("tuple", v.tuple.clone())?;
            vd.set_item(
                "case",
                match v.case {
                    DgpCase::Span => "i",
                    DgpCase::Affine => "ii",
                },
            )?;
            vd.set_item("residual", v.residual)?;
            out.set_item("violation", vd)?;
        }
        None => out.set_item("violation", py.None())?,
    }
    out.set_item("enumeration_count", rep.enumeration_count)?;
    out.set_item("truncated", rep.truncated)?;
    Ok(out.unbind())
}

/// Decide whether the (penalized) criterion attains its minimum. At
/// `lam = 0` uses the separation / positive-margin characterizations of the
/// curved families; at `lam > 0` decides the for-every-response guarantee.
#[pyfunction]
#[pyo3(signature = (x, y, loss, lam=0.0, d=None, graph=None))]
fn existence_check(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    loss: &str,
    lam: f64,
    d: Option<&Bound<'_, PyAny>>,
    graph: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyDict>> {
    let family = parse_loss(loss)?;
    let xm = to_matrix(&x, "X")?;
    let dm = match d {
        Some(obj) => Some(resolve_penalty(obj, xm.ncols(), graph)?),
        None => None,
    };
    let rep = solver_glm::existence_check(&xm, &to_vector(&y), dm.as_ref(), lam, family)
        .map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item(
        "verdict",
        match rep.verdict {
            ExistenceVerdict::Guaranteed => "guaranteed",
            ExistenceVerdict::NotGuaranteed => "not_guaranteed",
            ExistenceVerdict::Violated => "violated",
        },
    )?;
    match &rep.witness {
        Some(w) => out.set_item("witness", vec_of(w))?,
        None => out.set_item("witness", py.None())?,
    }
    out.set_item("detail", rep.detail.clone())?;
    Ok(out.unbind())
}

/// Build a named penalty matrix (`identity`, `diff:k`, `graph`, `gtf:k`,
/// `ktf:N,d,k`) as nested lists.
#[pyfunction]
#[pyo3(signature = (name, p, graph=None))]
fn penalty_matrix(
    name: &str,
    p: usize,
    graph: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = match graph {
        None => None,
        Some(g) => {
            let nodes: usize = g
                .get_item("nodes")?
                .ok_or_else(|| PyValueError::new_err("graph dict needs a `nodes` key"))?
                .extract()?;
            let edges: Vec<(usize, usize)> = g
                .get_item("edges")?
                .ok_or_else(|| PyValueError::new_err("graph dict needs an `edges` key"))?
                .extract()?;
            Some(GraphSpec::new(nodes, edges).map_err(lib_err)?)
        }
    };
    Ok(rows_of(
        &penalty::build_named(name, p, spec.as_ref()).map_err(lib_err)?,
    ))
}

/// Reconstruct the fitted vector implied by a boundary pattern `(B, s)`
/// alone, without re-solving.
#[pyfunction]
#[pyo3(signature = (x, y, d, lam, boundary_set, signs, loss="squared", graph=None))]
#[allow(clippy::too_many_arguments)]
fn boundary_fit(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    d: &Bound<'_, PyAny>,
    lam: f64,
    boundary_set: Vec<usize>,
    signs: Vec<f64>,
    loss: &str,
    graph: Option<&Bound<'_, PyDict>>,
) -> PyResult<Py<PyDict>> {
    let family = parse_loss(loss)?;
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let tols = NumericTolerances::default();
    let out = PyDict::new(py);
    if family == LossFamily::Squared {
        let inst = ProblemInstance::new(to_vector(&y), xm, dm, lam).map_err(lib_err)?;
        let fit = solver_sq::fit_from_boundary(&inst, &boundary_set, &signs, &tols)
            .map_err(lib_err)?;
        out.set_item("fit", vec_of(&fit))?;
        out.set_item("mean", vec_of(&fit))?;
        out.set_item("notes", Vec::<String>::new())?;
    } else {
        let inst = GlmProblem::new(to_vector(&y), xm, dm, lam, family).map_err(lib_err)?;
        let bf = solver_glm::fit_from_boundary_glm(&inst, &boundary_set, &signs, &tols)
            .map_err(lib_err)?;
        out.set_item("fit", vec_of(&bf.fit))?;
        out.set_item("mean", vec_of(&bf.mean))?;
        out.set_item("notes", bf.notes.clone())?;
    }
    Ok(out.unbind())
}

/// Probe whether the boundary/active pattern survives random response
/// perturbations of an adaptively shrunk radius.
#[pyfunction]
#[pyo3(signature = (x, y, d, lam, loss="squared", graph=None, eps=1e-3, directions=20,
                    seed=0, max_shrinks=10))]
#[allow(clippy::too_many_arguments)]
fn stability_probe(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    d: &Bound<'_, PyAny>,
    lam: f64,
    loss: &str,
    graph: Option<&Bound<'_, PyDict>>,
    eps: f64,
    directions: usize,
    seed: u64,
    max_shrinks: usize,
) -> PyResult<Py<PyDict>> {
    let family = parse_loss(loss)?;
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let inst = GlmProblem::new(to_vector(&y), xm, dm, lam, family).map_err(lib_err)?;
    let opts = StabilityOptions {
        eps,
        directions,
        seed,
        tols: NumericTolerances::default(),
        max_shrinks,
    };
    let rep = local_stability_probe(&inst, &opts).map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item("directions", rep.directions)?;
    out.set_item("preserved", rep.preserved)?;
    out.set_item("solver_failures", rep.solver_failures)?;
    out.set_item("initial_eps", rep.initial_eps)?;
    out.set_item("final_eps", rep.final_eps)?;
    out.set_item("shrink_steps", rep.shrink_steps)?;
    out.set_item("stable", rep.stable)?;
    out.set_item("preserved_history", rep.preserved_history.clone())?;
    out.set_item("near_exceptional", rep.near_exceptional)?;
    out.set_item("m_rows", rep.m_rows)?;
    out.set_item("m_norm", rep.m_norm)?;
    out.set_item("m_fit_norm", rep.m_fit_norm)?;
    out.set_item("notes", rep.notes.clone())?;
    Ok(out.unbind())
}

/// Harvest several optimal subgradients and check that every observed
/// boundary set spans the same fitted subspace.
#[pyfunction]
#[pyo3(signature = (x, y, d, lam, loss="squared", graph=None, runs=12, seed=0))]
#[allow(clippy::too_many_arguments)]
fn invariance_probe(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    d: &Bound<'_, PyAny>,
    lam: f64,
    loss: &str,
    graph: Option<&Bound<'_, PyDict>>,
    runs: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let family = parse_loss(loss)?;
    let xm = to_matrix(&x, "X")?;
    let dm = resolve_penalty(d, xm.ncols(), graph)?;
    let inst = GlmProblem::new(to_vector(&y), xm, dm, lam, family).map_err(lib_err)?;
    let opts = InvarianceOptions {
        runs,
        seed,
        tols: NumericTolerances::default(),
    };
    let rep = subspace_invariance_probe(&inst, &opts).map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item("boundary_sets", rep.boundary_sets.clone())?;
    out.set_item("active_sets", rep.active_sets.clone())?;
    out.set_item("single_boundary_set", rep.single_boundary_set)?;
    out.set_item("subspace_dim", rep.subspace_dim)?;
    out.set_item("all_pairwise_equal", rep.all_pairwise_equal)?;
    out.set_item("active_matches_boundary", rep.active_matches_boundary)?;
    out.set_item("vertices_sampled", rep.vertices_sampled)?;
    out.set_item("notes", rep.notes.clone())?;
    Ok(out.unbind())
}

/// Draw independent instances, certify each, and tally the verdicts.
#[pyfunction]
#[pyo3(signature = (n, p, penalty, loss, lam, trials, seed,
                    ensemble="gaussian", perturbation_eps=1e-3))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo(
    py: Python<'_>,
    n: usize,
    p: usize,
    penalty: &str,
    loss: &str,
    lam: f64,
    trials: usize,
    seed: u64,
    ensemble: &str,
    perturbation_eps: f64,
) -> PyResult<Py<PyDict>> {
    let cfg = TrialConfig {
        n,
        p,
        penalty: penalty.to_string(),
        loss: parse_loss(loss)?,
        lambda: lam,
        trials,
        seed,
        perturbation_eps,
        ensemble: ensemble.to_string(),
    };
    let summary = monte_carlo_uniqueness(&cfg).map_err(lib_err)?;
    let out = PyDict::new(py);
    out.set_item("nullity_d", summary.nullity_d)?;
    out.set_item("outside_theorem", summary.outside_theorem)?;
    out.set_item("model", counts_dict(py, &summary.model)?)?;
    match &summary.surrogate {
        Some(s) => out.set_item("surrogate", counts_dict(py, s)?)?,
        None => out.set_item("surrogate", py.None())?,
    }
    let exemplars: Vec<Py<PyDict>> = summary
        .exemplars
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("trial", e.trial)?;
            d.set_item("draw", e.draw.clone())?;
            d.set_item("verdict", verdict_str(&e.verdict))?;
            d.set_item("notes", e.notes.clone())?;
            Ok(d.unbind())
        })
        .collect::<PyResult<_>>()?;
    out.set_item("exemplars", exemplars)?;
    Ok(out.unbind())
}

#[pymodule]
fn genlasso_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_glm, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(dgp_check, m)?)?;
    m.add_function(wrap_pyfunction!(existence_check, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_fit, m)?)?;
    m.add_function(wrap_pyfunction!(stability_probe, m)?)?;
    m.add_function(wrap_pyfunction!(invariance_probe, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    Ok(())
}
