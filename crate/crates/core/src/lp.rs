//! A small dense linear-programming solver (two-phase primal simplex with
//! Bland's rule).
//!
//! The feasibility questions in this crate — strict-sign systems, separation
//! searches, margin maximization over low-dimensional subspaces — are all
//! tiny dense LPs where an exact basic solution and a reusable witness matter
//! more than speed. A textbook two-phase simplex with Bland's anti-cycling
//! rule is deterministic, allocation-light, and returns vertex solutions,
//! which is exactly what the callers need.

use crate::{Error, Result};

/// Constraint sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

/// A single linear constraint `coeffs . x (cmp) rhs`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// `minimize objective . x` subject to constraints and per-variable bounds
/// (`f64::NEG_INFINITY` / `f64::INFINITY` mark unbounded sides).
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// A problem with all variables free and a zero objective; callers then
    /// push constraints (useful for pure feasibility questions).
    pub fn new(num_vars: usize) -> Self {
        LpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
        }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push(Constraint { coeffs, cmp, rhs });
    }
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// How each original variable maps into the nonnegative standard-form space.
enum VarMap {
    /// `x = lo + x'` with `x' >= 0`.
    Shifted { col: usize, lo: f64 },
    /// `x = hi - x'` with `x' >= 0` (only an upper bound is finite).
    Flipped { col: usize, hi: f64 },
    /// Free variable `x = x+ - x-`.
    Split { plus: usize, minus: usize },
}

const PIVOT_TOL: f64 = 1e-9;

pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    if p.objective.len() != p.num_vars || p.bounds.len() != p.num_vars {
        return Err(Error::DimensionMismatch(
            "objective/bounds length must equal num_vars".into(),
        ));
    }
    for c in &p.constraints {
        if c.coeffs.len() != p.num_vars {
            return Err(Error::DimensionMismatch(
                "constraint length must equal num_vars".into(),
            ));
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LP constraint".into()));
        }
    }
    if p.objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LP objective".into()));
    }

    // --- Transform to nonnegative variables. ---
    let mut maps: Vec<VarMap> = Vec::with_capacity(p.num_vars);
    let mut n_cols = 0usize;
    // Rows collected as (coeffs over transformed vars, cmp, rhs).
    let mut rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
    for (lo, hi) in p.bounds.iter().copied() {
        if lo.is_finite() && hi.is_finite() && hi < lo {
            return Ok(LpOutcome::Infeasible);
        }
        let map = if lo.is_finite() {
            let m = VarMap::Shifted { col: n_cols, lo };
            n_cols += 1;
            m
        } else if hi.is_finite() {
            let m = VarMap::Flipped { col: n_cols, hi };
            n_cols += 1;
            m
        } else {
            let m = VarMap::Split {
                plus: n_cols,
                minus: n_cols + 1,
            };
            n_cols += 2;
            m
        };
        maps.push(map);
    }
    // Finite upper bounds of shifted variables become explicit rows.
    for (i, (lo, hi)) in p.bounds.iter().copied().enumerate() {
        if lo.is_finite() && hi.is_finite() {
            if let VarMap::Shifted { col, .. } = maps[i] {
                let mut coeffs = vec![0.0; n_cols];
                coeffs[col] = 1.0;
                rows.push((coeffs, Cmp::Le, hi - lo));
            }
        }
    }

    // Rewrite each user constraint over the transformed variables.
    let transform_row = |coeffs: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; n_cols];
        let mut shift = 0.0; // constant contributed by substitutions
        for (i, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[i] {
                VarMap::Shifted { col, lo } => {
                    out[col] += a;
                    shift += a * lo;
                }
                VarMap::Flipped { col, hi } => {
                    out[col] -= a;
                    shift += a * hi;
                }
                VarMap::Split { plus, minus } => {
                    out[plus] += a;
                    out[minus] -= a;
                }
            }
        }
        (out, shift)
    };
    for c in &p.constraints {
        let (coeffs, shift) = transform_row(&c.coeffs);
        rows.push((coeffs, c.cmp, c.rhs - shift));
    }
    let (obj_coeffs, obj_shift) = transform_row(&p.objective);

    // --- Standard form with slacks and artificials. ---
    let m = rows.len();
    let mut n_total = n_cols;
    // (column index of slack/surplus, sign) per row where applicable.
    let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = vec![usize::MAX; m];
    let mut slack_cols: Vec<Option<(usize, f64)>> = Vec::with_capacity(m);
    for (coeffs, cmp, rhs) in &rows {
        let mut flip = 1.0;
        if *rhs < 0.0 {
            flip = -1.0;
        }
        let cmp_eff = match (cmp, flip < 0.0) {
            (Cmp::Le, false) | (Cmp::Ge, true) => Cmp::Le,
            (Cmp::Ge, false) | (Cmp::Le, true) => Cmp::Ge,
            (Cmp::Eq, _) => Cmp::Eq,
        };
        let slack = match cmp_eff {
            Cmp::Le => {
                let col = n_total;
                n_total += 1;
                Some((col, 1.0))
            }
            Cmp::Ge => {
                let col = n_total;
                n_total += 1;
                Some((col, -1.0))
            }
            Cmp::Eq => None,
        };
        slack_cols.push(slack);
        let mut row: Vec<f64> = coeffs.iter().map(|v| v * flip).collect();
        row.push(rhs * flip);
        tableau.push(row);
    }
    // Expand every row to hold slack columns + artificials later; first place
    // slacks and decide which rows need artificials.
    let mut artificial_rows: Vec<usize> = Vec::new();
    for (i, slack) in slack_cols.iter().enumerate() {
        match slack {
            Some((_, sign)) if *sign > 0.0 => {
                // Slack can start basic.
            }
            _ => artificial_rows.push(i),
        }
    }
    let n_art = artificial_rows.len();
    let total_cols = n_total + n_art;
    for (i, row) in tableau.iter_mut().enumerate() {
        let rhs = row.pop().expect("rhs present");
        row.resize(total_cols, 0.0);
        if let Some((col, sign)) = slack_cols[i] {
            row[col] = sign;
        }
        row.push(rhs);
    }
    for (k, &i) in artificial_rows.iter().enumerate() {
        let col = n_total + k;
        tableau[i][col] = 1.0;
        basis[i] = col;
    }
    for (i, slack) in slack_cols.iter().enumerate() {
        if basis[i] == usize::MAX {
            let (col, _) = slack.expect("rows without artificials have a + slack");
            basis[i] = col;
        }
    }

    let scale = tableau
        .iter()
        .map(|r| r[total_cols].abs())
        .fold(1.0f64, f64::max);

    // --- Phase 1: minimize the sum of artificials. ---
    if n_art > 0 {
        let mut cost = vec![0.0; total_cols];
        for k in 0..n_art {
            cost[n_total + k] = 1.0;
        }
        let value = run_simplex(&mut tableau, &mut basis, &cost, total_cols)?;
        let value = match value {
            SimplexEnd::Optimal(v) => v,
            SimplexEnd::Unbounded => {
                return Err(Error::Lp("phase-1 objective unbounded below".into()))
            }
        };
        if value > 1e-8 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot any artificial still basic (at zero level) out of the basis.
        for i in 0..m {
            if basis[i] >= n_total {
                let pivot_col = (0..n_total).find(|&j| tableau[i][j].abs() > PIVOT_TOL);
                if let Some(j) = pivot_col {
                    pivot(&mut tableau, &mut basis, i, j, total_cols);
                }
                // If no pivot column exists the row is redundant (all zeros);
                // the artificial stays basic at zero, which is harmless as
                // long as its column is never re-entered — phase 2 cost below
                // keeps artificial columns out by giving them no improving
                // reduced cost and we additionally bar them from entering.
            }
        }
    }

    // --- Phase 2: original objective. ---
    let mut cost = vec![0.0; total_cols];
    cost[..n_cols].copy_from_slice(&obj_coeffs);
    let end = run_simplex_restricted(&mut tableau, &mut basis, &cost, total_cols, n_total)?;
    let value = match end {
        SimplexEnd::Optimal(v) => v,
        SimplexEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    };

    // --- Read the solution back in original coordinates. ---
    let mut transformed = vec![0.0; total_cols];
    for (i, &b) in basis.iter().enumerate() {
        transformed[b] = tableau[i][total_cols];
    }
    let mut x = vec![0.0; p.num_vars];
    for (i, map) in maps.iter().enumerate() {
        x[i] = match *map {
            VarMap::Shifted { col, lo } => lo + transformed[col],
            VarMap::Flipped { col, hi } => hi - transformed[col],
            VarMap::Split { plus, minus } => transformed[plus] - transformed[minus],
        };
    }
    Ok(LpOutcome::Optimal {
        x,
        value: value + obj_shift,
    })
}

enum SimplexEnd {
    Optimal(f64),
    Unbounded,
}

/// Primal simplex on the tableau, Bland's rule, minimizing `cost`.
fn run_simplex(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    total_cols: usize,
) -> Result<SimplexEnd> {
    run_simplex_restricted(tableau, basis, cost, total_cols, total_cols)
}

/// Same as [`run_simplex`] but only columns `< allowed_cols` may enter the
/// basis (used in phase 2 to keep artificial columns out).
fn run_simplex_restricted(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    total_cols: usize,
    allowed_cols: usize,
) -> Result<SimplexEnd> {
    let m = tableau.len();
    let max_pivots = 2000 + 200 * (m + total_cols);
    for _ in 0..max_pivots {
        // Reduced costs: r_j = c_j - sum_i c_{basis_i} * T[i][j].
        let mut reduced = cost[..total_cols].to_vec();
        for i in 0..m {
            let cb = cost[basis[i]];
            if cb != 0.0 {
                for j in 0..total_cols {
                    reduced[j] -= cb * tableau[i][j];
                }
            }
        }
        // Bland: smallest-index improving column.
        let entering = (0..allowed_cols).find(|&j| reduced[j] < -PIVOT_TOL);
        let entering = match entering {
            Some(j) => j,
            None => {
                let mut value = 0.0;
                for i in 0..m {
                    value += cost[basis[i]] * tableau[i][total_cols];
                }
                return Ok(SimplexEnd::Optimal(value));
            }
        };
        // Ratio test; Bland tie-break on the leaving basis variable index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = tableau[i][entering];
            if a > PIVOT_TOL {
                let ratio = tableau[i][total_cols] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((best_i, best_r)) => {
                        if ratio < best_r - PIVOT_TOL
                            || ((ratio - best_r).abs() <= PIVOT_TOL
                                && basis[i] < basis[best_i])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (leaving_row, _) = match leave {
            Some(l) => l,
            None => return Ok(SimplexEnd::Unbounded),
        };
        pivot(tableau, basis, leaving_row, entering, total_cols);
    }
    Err(Error::Lp("simplex exceeded its pivot budget".into()))
}

fn pivot(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    row: usize,
    col: usize,
    total_cols: usize,
) {
    let piv = tableau[row][col];
    for v in tableau[row][..=total_cols].iter_mut() {
        *v /= piv;
    }
    let pivot_row: Vec<f64> = tableau[row][..=total_cols].to_vec();
    for (i, r) in tableau.iter_mut().enumerate() {
        if i != row {
            let factor = r[col];
            if factor != 0.0 {
                for (v, &lead) in r[..=total_cols].iter_mut().zip(&pivot_row) {
                    *v -= factor * lead;
                }
            }
        }
    }
    basis[row] = col;
}
