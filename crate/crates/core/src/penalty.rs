//! Constructors for the structured penalty matrix `D`.
//!
//! Supported families: the identity (plain lasso), higher-order difference
//! matrices (trend filtering on a line), oriented graph incidence matrices
//! (the fused lasso on a graph), graph trend filtering operators, and
//! Kronecker-product trend filtering over regular grids.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, NumericTolerances};
use crate::{Error, Result};

/// An undirected graph given by a node count and an edge list.
///
/// Edges are kept in input order; duplicate edges are allowed (they produce
/// duplicate penalty rows, which is occasionally useful for exercising
/// row-rank-deficient penalties). Self-loops are rejected because they would
/// contribute identically-zero rows.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphSpec {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = GraphSpec { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(nodes: usize) -> Self {
        GraphSpec {
            nodes,
            edges: (1..nodes).map(|i| (i - 1, i)).collect(),
        }
    }

    /// Cycle graph on `n >= 3` nodes.
    pub fn cycle(nodes: usize) -> Self {
        let mut edges: Vec<(usize, usize)> = (1..nodes).map(|i| (i - 1, i)).collect();
        if nodes >= 3 {
            edges.push((nodes - 1, 0));
        }
        GraphSpec { nodes, edges }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::InvalidInput("graph must have at least one node".into()));
        }
        for &(a, b) in &self.edges {
            if a >= self.nodes || b >= self.nodes {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) references a node outside 0..{}",
                    self.nodes
                )));
            }
            if a == b {
                return Err(Error::InvalidInput(format!(
                    "self-loop ({a}, {a}) would produce a zero penalty row"
                )));
            }
        }
        Ok(())
    }

    /// Number of connected components, by breadth-first traversal.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.nodes];
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut components = 0;
        let mut queue = Vec::new();
        for start in 0..self.nodes {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push(start);
            while let Some(v) = queue.pop() {
                for &w in &adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push(w);
                    }
                }
            }
        }
        components
    }
}

/// The `p x p` identity penalty (plain lasso).
pub fn identity_penalty(p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidInput("identity penalty needs p >= 1".into()));
    }
    Ok(DMatrix::identity(p, p))
}

/// Order-`order` difference matrix on `p` coordinates, shape `(p - order) x p`.
///
/// Order 1 has rows `(-1, 1)` on consecutive coordinates; order `q` is the
/// order-1 matrix of size `p - q + 1` composed with the order-`(q-1)` matrix,
/// so the order-2 stencil is `(1, -2, 1)` and so on. Its null space consists
/// of the polynomials of degree `< order`, hence has dimension `order`.
pub fn difference_matrix(p: usize, order: usize) -> Result<DMatrix<f64>> {
    if order < 1 {
        return Err(Error::InvalidInput("difference order must be >= 1".into()));
    }
    if order >= p {
        return Err(Error::InvalidInput(format!(
            "difference order {order} needs p > order, got p = {p}"
        )));
    }
    let mut d = first_difference(p);
    for q in 1..order {
        d = first_difference(p - q) * d;
    }
    Ok(d)
}

fn first_difference(p: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(p - 1, p);
    for i in 0..p - 1 {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

/// Oriented incidence matrix: one row per edge `(a, b)` with `-1` at `a` and
/// `+1` at `b`, in edge-list order. Its null space is spanned by the
/// indicator vectors of the connected components.
pub fn graph_incidence(g: &GraphSpec) -> Result<DMatrix<f64>> {
    g.validate()?;
    let mut d = DMatrix::zeros(g.edges.len(), g.nodes);
    for (row, &(a, b)) in g.edges.iter().enumerate() {
        d[(row, a)] = -1.0;
        d[(row, b)] = 1.0;
    }
    Ok(d)
}

/// Graph trend filtering operator of order `k`.
///
/// With `D` the incidence matrix and `L = D^T D` the graph Laplacian:
/// order 0 is `D` itself, odd orders are Laplacian powers `L^((k+1)/2)`,
/// and even orders `k >= 2` are `D * L^(k/2)`. For every order the null
/// space is spanned by the component indicators, so its dimension equals the
/// number of connected components.
pub fn graph_trend_filtering(g: &GraphSpec, k: usize) -> Result<DMatrix<f64>> {
    let d = graph_incidence(g)?;
    if k == 0 {
        return Ok(d);
    }
    let laplacian = d.transpose() * &d;
    let mut power = DMatrix::identity(g.nodes, g.nodes);
    let half = k.div_ceil(2);
    for _ in 0..half {
        power = &power * &laplacian;
    }
    if k % 2 == 1 {
        // Odd order: L^((k+1)/2).
        Ok(power)
    } else {
        // Even order: D * L^(k/2); note (k+1)/2 == k/2 for even k.
        Ok(d * power)
    }
}

/// Trend filtering over a `d`-dimensional grid with `n_side` points per axis,
/// built from Kronecker products.
///
/// The operator stacks `d` blocks; block `j` applies the order-`(k+1)`
/// one-dimensional difference matrix along axis `j` and the identity along
/// every other axis:
///
/// ```text
///   block_j = I ⊗ ... ⊗ I ⊗ diff(n_side, k + 1) ⊗ I ⊗ ... ⊗ I
/// ```
///
/// (difference factor in position `j`; coordinates are vectorized with the
/// last axis fastest). The total shape is
/// `d * (n_side - k - 1) * n_side^(d-1)` rows by `n_side^d` columns, and the
/// null space — tensor products of per-axis polynomials of degree `<= k` —
/// has dimension `(k + 1)^d`.
pub fn kronecker_trend_filtering(n_side: usize, d: usize, k: usize) -> Result<DMatrix<f64>> {
    if d < 1 {
        return Err(Error::InvalidInput("grid dimension d must be >= 1".into()));
    }
    if n_side < k + 2 {
        return Err(Error::InvalidInput(format!(
            "grid side {n_side} too small for difference order {}",
            k + 1
        )));
    }
    let p = n_side
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidInput("grid is too large".into()))?;
    if p > 4096 {
        return Err(Error::InvalidInput(format!(
            "grid with {p} cells exceeds the supported dense-matrix size"
        )));
    }
    let diff = difference_matrix(n_side, k + 1)?;
    let mut blocks = Vec::with_capacity(d);
    for j in 0..d {
        let mut block = DMatrix::identity(1, 1);
        for axis in 0..d {
            let factor = if axis == j {
                diff.clone()
            } else {
                DMatrix::identity(n_side, n_side)
            };
            block = block.kronecker(&factor);
        }
        blocks.push(block);
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    linalg::stack_rows(&refs)
}

/// Dimension of the null space of a penalty matrix.
pub fn nullity(d: &DMatrix<f64>, tols: &NumericTolerances) -> Result<usize> {
    Ok(d.ncols() - linalg::rank(d, tols)?)
}

/// Builds a penalty matrix from a short builder name.
///
/// Accepted names, all producing a matrix with `p` columns:
///
/// * `identity` — the `p x p` identity;
/// * `diff:k` — the order-`k` difference matrix;
/// * `graph` — the incidence matrix of `graph` (a path on `p` nodes when no
///   graph is supplied);
/// * `gtf:k` — graph trend filtering of order `k` on the same graph;
/// * `ktf:N,d,k` — Kronecker trend filtering on a `d`-dimensional grid with
///   `N` points per side; requires `p = N^d`.
pub fn build_named(name: &str, p: usize, graph: Option<&GraphSpec>) -> Result<DMatrix<f64>> {
    let resolve_graph = || -> Result<GraphSpec> {
        match graph {
            Some(g) => {
                if g.nodes != p {
                    return Err(Error::InvalidInput(format!(
                        "graph has {} nodes but the problem has p = {p}",
                        g.nodes
                    )));
                }
                Ok(g.clone())
            }
            None => Ok(GraphSpec::path(p)),
        }
    };
    let parse_count = |txt: &str, what: &str| -> Result<usize> {
        txt.parse::<usize>().map_err(|_| {
            Error::InvalidInput(format!("penalty builder `{name}`: bad {what} `{txt}`"))
        })
    };
    if name == "identity" {
        identity_penalty(p)
    } else if let Some(arg) = name.strip_prefix("diff:") {
        difference_matrix(p, parse_count(arg, "order")?)
    } else if name == "graph" {
        graph_incidence(&resolve_graph()?)
    } else if let Some(arg) = name.strip_prefix("gtf:") {
        graph_trend_filtering(&resolve_graph()?, parse_count(arg, "order")?)
    } else if let Some(arg) = name.strip_prefix("ktf:") {
        let parts: Vec<&str> = arg.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "penalty builder `{name}`: expected ktf:N,d,k"
            )));
        }
        let n_side = parse_count(parts[0], "grid side")?;
        let dim = parse_count(parts[1], "grid dimension")?;
        let k = parse_count(parts[2], "order")?;
        let cells = n_side
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidInput("grid is too large".into()))?;
        if cells != p {
            return Err(Error::InvalidInput(format!(
                "ktf grid has {cells} cells but the problem has p = {p}"
            )));
        }
        kronecker_trend_filtering(n_side, dim, k)
    } else {
        Err(Error::InvalidInput(format!(
            "unknown penalty builder `{name}` (expected identity, diff:k, graph, gtf:k, \
             or ktf:N,d,k)"
        )))
    }
}
