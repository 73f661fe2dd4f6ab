//! Projection operators, bearings and bearing rigidity of frameworks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::Graph;
use crate::linalg::{self, translation_basis};

/// Edges or vectors shorter than this are treated as degenerate.
pub const SEPARATION_EPS: f64 = 1e-9;

/// Relative residual threshold for bearing equivalence and congruence.
pub const EQUIVALENCE_TOL: f64 = 1e-8;

/// Orthogonal projection onto the complement of `x`: `I - x xᵀ / ‖x‖²`.
pub fn projection(x: &[f64]) -> Result<DMatrix<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > SEPARATION_EPS) {
        return Err(Error::DegenerateVector(norm));
    }
    let d = x.len();
    Ok(DMatrix::from_fn(d, d, |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        delta - x[r] * x[c] / (norm * norm)
    }))
}

/// Edge vector, bearing and length of every canonical edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingSet {
    pub dim: usize,
    /// Stacked edge vectors `e = H̄ p`.
    pub edge_vectors: DVector<f64>,
    /// Stacked unit bearings `g = F_B(p)`.
    pub bearings: DVector<f64>,
    pub lengths: Vec<f64>,
}

impl BearingSet {
    pub fn bearing(&self, k: usize) -> &[f64] {
        &self.bearings.as_slice()[self.dim * k..self.dim * (k + 1)]
    }

    pub fn edge_vector(&self, k: usize) -> &[f64] {
        &self.edge_vectors.as_slice()[self.dim * k..self.dim * (k + 1)]
    }
}

/// Edge vectors and bearings of `p` over `graph`; fails on the first edge
/// shorter than [`SEPARATION_EPS`].
pub fn bearings_of(graph: &Graph, d: usize, p: &[f64]) -> Result<BearingSet> {
    let m = graph.edge_count();
    let mut e = DVector::zeros(d * m);
    let mut g = DVector::zeros(d * m);
    let mut lengths = Vec::with_capacity(m);
    for (k, edge) in graph.edges().iter().enumerate() {
        let mut len2 = 0.0;
        for a in 0..d {
            let v = p[d * edge.head + a] - p[d * edge.tail + a];
            e[d * k + a] = v;
            len2 += v * v;
        }
        let len = len2.sqrt();
        if !(len > SEPARATION_EPS) {
            let (i, j) = edge.labels();
            return Err(Error::DegenerateEdge(i, j));
        }
        for a in 0..d {
            g[d * k + a] = e[d * k + a] / len;
        }
        lengths.push(len);
    }
    Ok(BearingSet {
        dim: d,
        edge_vectors: e,
        bearings: g,
        lengths,
    })
}

/// The bearing function `F_B(p)`: all edge bearings stacked.
pub fn bearing_function(graph: &Graph, d: usize, p: &DVector<f64>) -> Result<DVector<f64>> {
    bearings_of(graph, d, p.as_slice()).map(|b| b.bearings)
}

/// A graph together with a configuration in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Framework {
    graph: Graph,
    dim: usize,
    positions: DVector<f64>,
}

impl Framework {
    /// Validates dimensions and rejects edges whose endpoints coincide.
    pub fn new(graph: Graph, dim: usize, positions: DVector<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "framework dimension must be at least 2, got {dim}"
            )));
        }
        let expected = dim * graph.vertex_count();
        if positions.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: positions.len(),
            });
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        bearings_of(&graph, dim, positions.as_slice())?;
        Ok(Framework {
            graph,
            dim,
            positions,
        })
    }

    /// Convenience constructor from 1-based edges and per-agent points.
    pub fn from_points(edges: &[(usize, usize)], points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|pt| pt.len() != dim) {
            return Err(Error::InvalidParameter(
                "all points must have the same dimension".into(),
            ));
        }
        let graph = Graph::new(points.len(), edges)?;
        let p = DVector::from_iterator(dim * points.len(), points.iter().flatten().copied());
        Framework::new(graph, dim, p)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &DVector<f64> {
        &self.positions
    }

    pub fn agent_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn bearing_set(&self) -> BearingSet {
        bearings_of(&self.graph, self.dim, self.positions.as_slice())
            .expect("framework edges are validated on construction")
    }

    /// `R(p) = diag(P_{g_k} / ‖e_k‖) H̄`, the Jacobian of the bearing function.
    pub fn rigidity_matrix(&self) -> DMatrix<f64> {
        let d = self.dim;
        let bs = self.bearing_set();
        let mut r = DMatrix::zeros(d * self.graph.edge_count(), d * self.agent_count());
        for (k, edge) in self.graph.edges().iter().enumerate() {
            let g = bs.bearing(k);
            let inv_len = 1.0 / bs.lengths[k];
            for a in 0..d {
                for b in 0..d {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let v = (delta - g[a] * g[b]) * inv_len;
                    r[(d * k + a, d * edge.head + b)] = v;
                    r[(d * k + a, d * edge.tail + b)] = -v;
                }
            }
        }
        r
    }

    /// The same configuration over the complete graph. Requires every pair
    /// of agents to be separated.
    pub fn complete(&self) -> Result<Framework> {
        let n = self.agent_count();
        let p = self.positions.as_slice();
        for i in 0..n {
            for j in (i + 1)..n {
                if !(geometry::distance(p, self.dim, i, j) > SEPARATION_EPS) {
                    return Err(Error::CoincidentVertices(i + 1, j + 1));
                }
            }
        }
        Framework::new(Graph::complete(n)?, self.dim, self.positions.clone())
    }

    /// `dn - d - 1`, the rank of `R(p)` for an infinitesimally rigid framework.
    pub fn rigid_rank(&self) -> usize {
        self.dim * self.agent_count() - self.dim - 1
    }

    pub fn rigidity_report(&self, tol: f64) -> Result<RigidityReport> {
        let complete = self.complete()?;
        let own = linalg::rank_nullspace(&self.rigidity_matrix(), tol)?;
        let rank_complete = linalg::rank(&complete.rigidity_matrix(), tol)?;
        let required = self.rigid_rank();
        let globally = own.rank == rank_complete;
        Ok(RigidityReport {
            dimension: self.dim,
            agents: self.agent_count(),
            edges: self.graph.edge_count(),
            rank: own.rank,
            nullity: own.nullity(),
            rank_complete,
            required_rank: required,
            infinitesimally_bearing_rigid: own.rank == required,
            globally_bearing_rigid: globally,
            bearing_rigid: globally,
            null_basis: own
                .null_basis
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            tolerance: tol,
        })
    }

    fn check_other(&self, other: &DVector<f64>) -> Result<()> {
        if other.len() != self.positions.len() {
            return Err(Error::DimensionMismatch {
                expected: self.positions.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    /// Whether `other` has the same bearings as `self` on every edge,
    /// tested as `‖R(p) p'‖ <= tol ‖p'‖`.
    pub fn is_bearing_equivalent(&self, other: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_other(other)?;
        Ok((self.rigidity_matrix() * other).norm() <= tol * other.norm())
    }

    /// Whether `other` has the same bearings as `self` between every pair of
    /// agents, tested with the complete-graph matrix `R^κ(p)`.
    pub fn is_bearing_congruent(&self, other: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_other(other)?;
        let complete = self.complete()?;
        Ok((complete.rigidity_matrix() * other).norm() <= tol * other.norm())
    }

    /// Embeds the framework in `R^{d_new}` by zero-padding every position.
    pub fn lift(&self, d_new: usize) -> Result<Framework> {
        if d_new <= self.dim {
            return Err(Error::InvalidParameter(format!(
                "lifted dimension {d_new} must exceed {}",
                self.dim
            )));
        }
        Framework::new(
            self.graph.clone(),
            d_new,
            geometry::zero_pad(&self.positions, self.dim, d_new),
        )
    }
}

/// Rank-based bearing rigidity classification of a framework.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityReport {
    pub dimension: usize,
    pub agents: usize,
    pub edges: usize,
    /// Rank of `R(p)`.
    pub rank: usize,
    pub nullity: usize,
    /// Rank of the complete-graph matrix `R^κ(p)`.
    pub rank_complete: usize,
    /// `dn - d - 1`.
    pub required_rank: usize,
    pub infinitesimally_bearing_rigid: bool,
    pub globally_bearing_rigid: bool,
    /// Equal to `globally_bearing_rigid`; the two notions coincide.
    pub bearing_rigid: bool,
    /// Orthonormal basis of `Null(R(p))`, one vector per entry.
    pub null_basis: Vec<Vec<f64>>,
    pub tolerance: f64,
}

/// Part of `other` that is not a translation or scaling of `p`: the
/// residual `q` in `p' = c p + 1 ⊗ η + q` with `q ⊥ span{1 ⊗ I_d, p}`.
pub fn similarity_residual(p: &DVector<f64>, other: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = geometry::agent_count(p, d);
    let t = translation_basis(n, d);
    let mut q = linalg::project_out(other, &t);
    let r = geometry::centered(p, d);
    let rn = r.norm();
    if rn > 0.0 {
        let r_hat = r / rn;
        let c = r_hat.dot(&q);
        q -= r_hat * c;
    }
    q
}
