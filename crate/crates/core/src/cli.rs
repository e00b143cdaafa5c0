//! File formats, JSON emission, and shared plumbing for the `genlasso`
//! binary.
//!
//! Three concerns live here so they can be unit-tested without spawning the
//! binary:
//!
//! * the matrix text format (`"rows cols"` header, then one line of
//!   space-separated decimals per row);
//! * deterministic JSON rendering with every float carrying 17 significant
//!   digits, so that write-then-read is the identity on `f64` and repeated
//!   runs with the same seed are byte-identical;
//! * conversion of solver / certificate / report types into
//!   [`serde_json::Value`] trees, with empty optional fields omitted.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::certify::{CertifyReport, RankCheck, SolutionSummary, UniquenessCertificate};
use crate::linalg::NumericTolerances;
use crate::penalty::{self, GraphSpec};
use crate::solver_glm::{ExistenceReport, GlmSolveResult};
use crate::solver_sq::{KktReport, SolveResult};
use crate::certify::{DgpReport, DgpViolation};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Matrix text format
// ---------------------------------------------------------------------------

/// Parses the matrix text format: first line `"rows cols"`, then `rows`
/// lines of `cols` space-separated decimal floats.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse(format!(
            "matrix header must be `rows cols`, got `{header}`"
        )));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| Error::Parse(format!("bad row count `{}`", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad column count `{}`", dims[1])))?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0usize;
    for line in lines {
        seen_rows += 1;
        if seen_rows > rows {
            return Err(Error::Parse(format!(
                "matrix has more than the declared {rows} rows"
            )));
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != cols {
            return Err(Error::Parse(format!(
                "row {seen_rows} has {} entries, header declares {cols}",
                values.len()
            )));
        }
        for tok in values {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("non-numeric token `{tok}`")))?;
            data.push(v);
        }
    }
    if seen_rows != rows {
        return Err(Error::Parse(format!(
            "matrix has {seen_rows} rows, header declares {rows}"
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Renders a matrix in the text format with 17-significant-digit entries
/// (re-reading the output reproduces the matrix bit for bit).
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", format_float(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Reads a matrix file.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text)
}

/// Writes a matrix file.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

/// Reads a vector file: a matrix with a single row or a single column.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(DVector::from_column_slice(m.column(0).as_slice()))
    } else if m.nrows() == 1 {
        Ok(DVector::from_row_slice(
            &m.row(0).iter().cloned().collect::<Vec<f64>>(),
        ))
    } else {
        Err(Error::Parse(format!(
            "expected a vector (one row or one column), got {}x{} in {}",
            m.nrows(),
            m.ncols(),
            path.display()
        )))
    }
}

// ---------------------------------------------------------------------------
// Flag parsing helpers
// ---------------------------------------------------------------------------

/// Parses the `--tolerances` flag: `"rank_tol,residual_tol,sign_tol"`.
pub fn parse_tolerances(text: &str) -> Result<NumericTolerances> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "tolerances must be `rank_tol,residual_tol,sign_tol`, got `{text}`"
        )));
    }
    let parse = |tok: &str, name: &str| -> Result<f64> {
        tok.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad {name} `{tok}`")))
    };
    let tols = NumericTolerances {
        rank_tol: parse(parts[0], "rank_tol")?,
        residual_tol: parse(parts[1], "residual_tol")?,
        sign_tol: parse(parts[2], "sign_tol")?,
    };
    tols.validate()?;
    Ok(tols)
}

/// Reads a graph description (`{"nodes": n, "edges": [[i, j], ...]}`).
pub fn read_graph_spec(path: &Path) -> Result<GraphSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let g: GraphSpec = serde_json::from_str(&text)?;
    g.validate()?;
    Ok(g)
}

/// Resolves the `--D` argument: an existing file path is read as a matrix;
/// otherwise the string is handed to the named penalty builders
/// (`identity`, `diff:k`, `graph`, `gtf:k`, `ktf:N,d,k`) with `p` columns.
pub fn resolve_penalty(spec: &str, p: usize, graph: Option<&GraphSpec>) -> Result<DMatrix<f64>> {
    let path = Path::new(spec);
    if path.is_file() {
        let d = read_matrix(path)?;
        if d.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "penalty matrix in {} has {} columns, design has {p}",
                path.display(),
                d.ncols()
            )));
        }
        return Ok(d);
    }
    penalty::build_named(spec, p, graph)
}

// ---------------------------------------------------------------------------
// Deterministic JSON rendering
// ---------------------------------------------------------------------------

/// Formats one float with 17 significant digits (`%.16e`), enough for the
/// decimal text to round-trip back to the identical `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn render_into(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if let Some(f) = n.as_f64().filter(|_| !n.is_i64() && !n.is_u64()) {
                out.push_str(&format_float(f));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => {
            let _ = write!(out, "{}", Value::String(s.clone()));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                render_into(item, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                let _ = write!(out, "{}: ", Value::String(key.clone()));
                render_into(item, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Renders a JSON value deterministically: object keys in map order (the
/// default map is ordered), arrays in index order, floats via
/// [`format_float`], two-space indentation, trailing newline.
pub fn render_json(value: &Value) -> String {
    let mut out = String::new();
    render_into(value, 0, &mut out);
    out.push('\n');
    out
}

/// Writes rendered JSON to `out`, or to stdout when no path is given.
pub fn emit_json(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = render_json(value);
    match out {
        Some(path) => {
            fs::write(path, text)?;
        }
        None => {
            print!("{text}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Value builders for the non-serde result types
// ---------------------------------------------------------------------------

/// A vector as a JSON array of floats.
pub fn vector_value(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| json!(x)).collect())
}

fn usize_vec_value(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|&x| json!(x)).collect())
}

fn f64_vec_value(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| json!(x)).collect())
}

fn kkt_value(k: &KktReport) -> Value {
    json!({
        "stationarity_residual": k.stationarity_residual,
        "subgradient_violation": k.subgradient_violation,
        "feasible": k.feasible,
    })
}

/// Solver output for the quadratic problem.
pub fn solve_result_value(r: &SolveResult, lambda: f64) -> Value {
    let mut map = Map::new();
    map.insert("lambda".into(), json!(lambda));
    map.insert("beta".into(), vector_value(&r.beta));
    map.insert("gamma".into(), vector_value(&r.gamma));
    map.insert("fit".into(), vector_value(&r.fit));
    map.insert("dual_u".into(), vector_value(&r.dual_u));
    map.insert("dual_v".into(), vector_value(&r.dual_v));
    map.insert("boundary_set".into(), usize_vec_value(&r.boundary_set));
    map.insert("boundary_signs".into(), f64_vec_value(&r.boundary_signs));
    map.insert("active_set".into(), usize_vec_value(&r.active_set));
    map.insert("active_signs".into(), f64_vec_value(&r.active_signs));
    map.insert("kkt".into(), kkt_value(&r.kkt));
    map.insert("duality_gap".into(), json!(r.duality_gap));
    map.insert("iterations".into(), json!(r.iterations));
    if !r.notes.is_empty() {
        map.insert("notes".into(), json!(r.notes));
    }
    Value::Object(map)
}

/// Solver output for the curved (logistic / Poisson) problems.
pub fn glm_result_value(r: &GlmSolveResult, loss: &str, lambda: f64) -> Value {
    let mut map = Map::new();
    map.insert("loss".into(), json!(loss));
    map.insert("lambda".into(), json!(lambda));
    map.insert("beta".into(), vector_value(&r.beta));
    map.insert("gamma".into(), vector_value(&r.gamma));
    map.insert("fit".into(), vector_value(&r.fit));
    map.insert("mean".into(), vector_value(&r.mean));
    map.insert("dual_u".into(), vector_value(&r.dual_u));
    map.insert("dual_v".into(), vector_value(&r.dual_v));
    map.insert("boundary_set".into(), usize_vec_value(&r.boundary_set));
    map.insert("boundary_signs".into(), f64_vec_value(&r.boundary_signs));
    map.insert("active_set".into(), usize_vec_value(&r.active_set));
    map.insert("active_signs".into(), f64_vec_value(&r.active_signs));
    map.insert("kkt".into(), kkt_value(&r.kkt));
    map.insert("criterion".into(), json!(r.criterion_value));
    map.insert("iterations".into(), json!(r.iterations));
    if !r.notes.is_empty() {
        map.insert("notes".into(), json!(r.notes));
    }
    Value::Object(map)
}

fn rank_check_value(rc: &RankCheck) -> Value {
    json!({
        "rank": rc.rank,
        "k": rc.k,
        "passed": rc.passed,
    })
}

fn solution_summary_value(s: &SolutionSummary) -> Value {
    let mut map = Map::new();
    map.insert("beta".into(), vector_value(&s.beta));
    map.insert("gamma".into(), vector_value(&s.gamma));
    map.insert("fit".into(), vector_value(&s.fit));
    map.insert("mean".into(), vector_value(&s.mean));
    map.insert("criterion".into(), json!(s.criterion_value));
    map.insert("kkt".into(), kkt_value(&s.kkt));
    map.insert("iterations".into(), json!(s.iterations));
    map.insert("active_set".into(), usize_vec_value(&s.active_set));
    map.insert("active_signs".into(), f64_vec_value(&s.active_signs));
    Value::Object(map)
}

fn certificate_value(c: &UniquenessCertificate) -> Value {
    let mut map = Map::new();
    map.insert("verdict".into(), serde_json::to_value(c.verdict).unwrap());
    map.insert(
        "boundary_set_used".into(),
        usize_vec_value(&c.boundary_set_used),
    );
    map.insert(
        "boundary_signs_used".into(),
        f64_vec_value(&c.boundary_signs_used),
    );
    if let Some(rc) = &c.rank_check {
        map.insert("rank_check".into(), rank_check_value(rc));
    }
    if let Some(dim) = c.null_intersection_dim {
        map.insert("null_intersection_dim".into(), json!(dim));
    }
    if let Some(w) = &c.witness {
        map.insert(
            "witness".into(),
            json!({
                "direction": vector_value(&w.direction),
                "second_solution": vector_value(&w.second_solution),
                "epsilon": w.epsilon,
            }),
        );
    }
    if !c.notes.is_empty() {
        map.insert("notes".into(), json!(c.notes));
    }
    Value::Object(map)
}

/// Certification output: the certificate plus the solution it reasons about.
pub fn certify_report_value(r: &CertifyReport) -> Value {
    let mut map = Map::new();
    map.insert("certificate".into(), certificate_value(&r.certificate));
    if let Some(s) = &r.solution {
        map.insert("solution".into(), solution_summary_value(s));
    }
    Value::Object(map)
}

fn dgp_violation_value(v: &DgpViolation) -> Value {
    json!({
        "boundary_set": v.boundary_set,
        "signs": v.signs,
        "tuple": v.tuple,
        "case": serde_json::to_value(v.case).unwrap(),
        "residual": v.residual,
    })
}

/// Position-check output.
pub fn dgp_report_value(r: &DgpReport) -> Value {
    let mut map = Map::new();
    map.insert("in_position".into(), json!(r.in_position));
    if let Some(v) = &r.violation {
        map.insert("violation".into(), dgp_violation_value(v));
    }
    map.insert("enumeration_count".into(), json!(r.enumeration_count));
    map.insert("truncated".into(), json!(r.truncated));
    Value::Object(map)
}

/// Existence-check output.
pub fn existence_report_value(r: &ExistenceReport) -> Value {
    let mut map = Map::new();
    map.insert("verdict".into(), serde_json::to_value(&r.verdict).unwrap());
    if let Some(w) = &r.witness {
        map.insert("witness".into(), vector_value(w));
    }
    map.insert("detail".into(), json!(r.detail));
    Value::Object(map)
}
