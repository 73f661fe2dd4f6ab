//! Bearing constraints, their feasibility, and the unique target formation
//! sharing the initial centroid and scale.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bearing::{bearings_of, Framework};
use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::Graph;
use crate::linalg::{self, translation_basis};
use crate::serde_util::dvector;

/// Allowed deviation of a constraint bearing from unit length.
pub const UNIT_TOL: f64 = 1e-9;

const SIGN_TOL: f64 = 1e-9;
const WITNESS_DRAWS: usize = 100;
const WITNESS_SEED: u64 = 0x6265_6172;

/// One desired unit bearing `g*_k` per canonical edge, stacked.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingConstraints {
    dim: usize,
    bearings: DVector<f64>,
}

impl BearingConstraints {
    /// Stacked bearings in the graph's canonical edge order.
    pub fn new(graph: &Graph, dim: usize, bearings: DVector<f64>) -> Result<Self> {
        let expected = dim * graph.edge_count();
        if bearings.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: bearings.len(),
            });
        }
        for (k, e) in graph.edges().iter().enumerate() {
            let norm = bearings.rows(dim * k, dim).norm();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                let (i, j) = e.labels();
                return Err(Error::NonUnitBearing(i, j, norm));
            }
        }
        Ok(BearingConstraints { dim, bearings })
    }

    /// Builds constraints from 1-based directed entries `((i, j), g*_ij)`.
    /// Each undirected edge needs at least one entry; when both directions
    /// are given they must satisfy `g*_ij = -g*_ji`.
    pub fn from_directed(
        graph: &Graph,
        dim: usize,
        entries: &[((usize, usize), Vec<f64>)],
    ) -> Result<Self> {
        let m = graph.edge_count();
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; m];
        for ((i, j), g) in entries {
            let (i, j) = (*i, *j);
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.len(),
                });
            }
            let k = if i >= 1 && j >= 1 {
                graph.edge_index(i - 1, j - 1)
            } else {
                None
            }
            .ok_or(Error::MissingBearing(i, j))?;
            let oriented: Vec<f64> = if i < j {
                g.clone()
            } else {
                g.iter().map(|x| -x).collect()
            };
            match &slots[k] {
                Some(prev) => {
                    let gap = prev
                        .iter()
                        .zip(&oriented)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if gap > UNIT_TOL {
                        return Err(Error::InconsistentBearing(i.min(j), i.max(j)));
                    }
                }
                None => slots[k] = Some(oriented),
            }
        }
        let mut stacked = DVector::zeros(dim * m);
        for (k, slot) in slots.into_iter().enumerate() {
            let g = slot.ok_or_else(|| {
                let (i, j) = graph.edges()[k].labels();
                Error::MissingBearing(i, j)
            })?;
            stacked.rows_mut(dim * k, dim).copy_from_slice(&g);
        }
        BearingConstraints::new(graph, dim, stacked)
    }

    /// The bearings realised by a framework.
    pub fn from_framework(f: &Framework) -> Self {
        BearingConstraints {
            dim: f.dim(),
            bearings: f.bearing_set().bearings,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edge_count(&self) -> usize {
        self.bearings.len() / self.dim
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.bearings
    }

    pub fn bearing(&self, k: usize) -> &[f64] {
        &self.bearings.as_slice()[self.dim * k..self.dim * (k + 1)]
    }

    /// Every bearing rotated by `rotation` (three-dimensional constraints).
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Result<Self> {
        if self.dim != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: self.dim,
            });
        }
        let mut out = self.bearings.clone();
        for k in 0..self.edge_count() {
            let g = rotation * Vector3::from_column_slice(self.bearing(k));
            out.rows_mut(3 * k, 3).copy_from(&g);
        }
        Ok(BearingConstraints {
            dim: 3,
            bearings: out,
        })
    }

    fn check_graph(&self, graph: &Graph) -> Result<()> {
        if graph.edge_count() != self.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.edge_count(),
                found: self.edge_count(),
            });
        }
        Ok(())
    }
}

/// `R̃ = diag(P_{g*_k}) H̄`, built from the constraints alone.
pub fn constraint_matrix(constraints: &BearingConstraints, graph: &Graph) -> Result<DMatrix<f64>> {
    constraints.check_graph(graph)?;
    let d = constraints.dim();
    let mut r = DMatrix::zeros(d * graph.edge_count(), d * graph.vertex_count());
    for (k, edge) in graph.edges().iter().enumerate() {
        let g = constraints.bearing(k);
        for a in 0..d {
            for b in 0..d {
                let delta = if a == b { 1.0 } else { 0.0 };
                let v = delta - g[a] * g[b];
                r[(d * k + a, d * edge.head + b)] = v;
                r[(d * k + a, d * edge.tail + b)] = -v;
            }
        }
    }
    Ok(r)
}

/// Outcome of the feasibility search.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// A configuration realising every constraint, when one was found.
    pub witness: Option<DVector<f64>>,
}

/// Null-space directions of `R̃` with translations removed, as orthonormal
/// columns.
fn shape_directions(
    constraints: &BearingConstraints,
    graph: &Graph,
    tol: f64,
) -> Result<(usize, DMatrix<f64>)> {
    let d = constraints.dim();
    let r = constraint_matrix(constraints, graph)?;
    let ns = linalg::rank_nullspace(&r, tol)?;
    let t = translation_basis(graph.vertex_count(), d);
    let reduced = &ns.null_basis - &t * (t.transpose() * &ns.null_basis);
    if reduced.ncols() == 0 {
        return Ok((ns.nullity(), DMatrix::zeros(d * graph.vertex_count(), 0)));
    }
    // left singular vectors of a rank-deficient tall matrix are unreliable here,
    // so go through the small Gram matrix instead
    let eig = (reduced.transpose() * &reduced).symmetric_eigen();
    let top = eig.eigenvalues.max().max(0.0).sqrt();
    let cutoff = (1e-6 * top).max(1e-6);
    let mut cols: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l.max(0.0).sqrt(), i))
        .filter(|&(s, _)| s > cutoff)
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut dirs = DMatrix::zeros(reduced.nrows(), cols.len());
    for (c, &(_, i)) in cols.iter().enumerate() {
        let mut q = &reduced * eig.eigenvectors.column(i);
        q /= q.norm();
        dirs.set_column(c, &q);
    }
    Ok((ns.nullity(), dirs))
}

/// Edge coefficients `c_k` with `q_head - q_tail = c_k g*_k`, or `None`
/// when some edge is not parallel to its bearing.
fn edge_coefficients(constraints: &BearingConstraints, graph: &Graph, q: &[f64]) -> Vec<f64> {
    let d = constraints.dim();
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let g = constraints.bearing(k);
            (0..d)
                .map(|a| (q[d * e.head + a] - q[d * e.tail + a]) * g[a])
                .sum()
        })
        .collect()
}

fn sign_consistent(constraints: &BearingConstraints, graph: &Graph, q: &DVector<f64>) -> bool {
    let d = constraints.dim();
    let scale = q.norm().max(f64::MIN_POSITIVE);
    let Ok(bs) = bearings_of(graph, d, q.as_slice()) else {
        return false;
    };
    let coeffs = edge_coefficients(constraints, graph, q.as_slice());
    coeffs.iter().enumerate().all(|(k, &c)| {
        let aligned = (0..d)
            .map(|a| (bs.bearing(k)[a] - constraints.bearing(k)[a]).abs())
            .fold(0.0, f64::max);
        c > SIGN_TOL * scale && aligned < 1e-8
    })
}

/// Searches the null space of `R̃` for a configuration whose edge bearings
/// equal the constraints (same sign, non-zero length).
pub fn feasibility_witness(
    constraints: &BearingConstraints,
    graph: &Graph,
    tol: f64,
) -> Result<Feasibility> {
    if !graph.is_connected() {
        return Err(Error::InvalidParameter(
            "sensing graph must be connected".into(),
        ));
    }
    let (_, dirs) = shape_directions(constraints, graph, tol)?;
    let infeasible = Feasibility {
        feasible: false,
        witness: None,
    };
    match dirs.ncols() {
        0 => Ok(infeasible),
        1 => {
            let q: DVector<f64> = dirs.column(0).into();
            for cand in [q.clone(), -q] {
                if sign_consistent(constraints, graph, &cand) {
                    return Ok(Feasibility {
                        feasible: true,
                        witness: Some(cand),
                    });
                }
            }
            Ok(infeasible)
        }
        k => {
            let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
            for _ in 0..WITNESS_DRAWS {
                let w = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
                let cand = &dirs * w;
                if sign_consistent(constraints, graph, &cand) {
                    return Ok(Feasibility {
                        feasible: true,
                        witness: Some(cand),
                    });
                }
                let neg = -cand;
                if sign_consistent(constraints, graph, &neg) {
                    return Ok(Feasibility {
                        feasible: true,
                        witness: Some(neg),
                    });
                }
            }
            Ok(infeasible)
        }
    }
}

/// The target formation `p* = 1 ⊗ p̄(0) + α q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSolution {
    pub dimension: usize,
    #[serde(with = "dvector")]
    pub p_star: DVector<f64>,
    /// Signed scale coefficient; `|alpha| = s(0) √n` for the unit `q`.
    pub alpha: f64,
    /// Centroid of the initial configuration.
    #[serde(with = "dvector")]
    pub x_shift: DVector<f64>,
    /// Unit null direction of `R̃` orthogonal to translations.
    #[serde(with = "dvector")]
    pub q_basis: DVector<f64>,
    pub feasible: bool,
}

/// Computes the unique formation satisfying the constraints with the
/// centroid and scale of `p0`. Requires the constraints to be feasible and
/// infinitesimally bearing rigid (nullity of `R̃` equal to `d + 1`).
pub fn compute_target(
    constraints: &BearingConstraints,
    graph: &Graph,
    p0: &DVector<f64>,
    tol: f64,
) -> Result<TargetSolution> {
    let d = constraints.dim();
    let n = graph.vertex_count();
    if p0.len() != d * n {
        return Err(Error::DimensionMismatch {
            expected: d * n,
            found: p0.len(),
        });
    }
    let (nullity, dirs) = shape_directions(constraints, graph, tol)?;
    if nullity > d + 1 || dirs.ncols() > 1 {
        return Err(Error::NotRigid {
            nullity,
            expected: d + 1,
        });
    }
    if dirs.ncols() == 0 {
        return Err(Error::Infeasible);
    }
    let q: DVector<f64> = dirs.column(0).into();
    let coeffs = edge_coefficients(constraints, graph, q.as_slice());
    let sign = coeffs
        .iter()
        .find(|c| c.abs() > SIGN_TOL)
        .map(|c| c.signum())
        .ok_or(Error::AmbiguousSign)?;
    let x_shift = geometry::centroid(p0, d);
    let s0 = geometry::scale(p0, d);
    if !(s0 > 0.0) {
        return Err(Error::InvalidParameter(
            "initial configuration has zero scale".into(),
        ));
    }
    let alpha = sign * s0 * (n as f64).sqrt() / q.norm();
    let p_star = geometry::replicate(&x_shift, n) + &q * alpha;

    // the returned formation must meet every defining condition
    let bs = bearings_of(graph, d, p_star.as_slice()).map_err(|_| Error::Infeasible)?;
    if (&bs.bearings - constraints.stacked()).amax() > 1e-8 {
        return Err(Error::Infeasible);
    }
    let scale_tol = 1e-9 * s0.max(1.0);
    let centroid_gap = (geometry::centroid(&p_star, d) - &x_shift).amax();
    let scale_gap = (geometry::scale(&p_star, d) - s0).abs();
    if centroid_gap > scale_tol || scale_gap > scale_tol {
        return Err(Error::InvalidParameter(format!(
            "target violates centroid/scale conditions ({centroid_gap:e}, {scale_gap:e})"
        )));
    }
    Ok(TargetSolution {
        dimension: d,
        p_star,
        alpha,
        x_shift,
        q_basis: q,
        feasible: true,
    })
}
