//! Bearing-only formation control in a shared global frame.
//!
//! Each agent moves with `v_i = -Σ_{j ∈ N_i} P_{g_ij} g*_ij`, using only the
//! measured bearings of its neighbours.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bearing::SEPARATION_EPS;
use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::Graph;
use crate::linalg;
use crate::target::{constraint_matrix, BearingConstraints};

/// Velocity of every agent, written into `out` (length `dn`).
pub(crate) fn control_velocity_into(
    graph: &Graph,
    d: usize,
    g_star: &[f64],
    p: &[f64],
    out: &mut [f64],
) -> Result<()> {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut g = vec![0.0; d];
    for (k, edge) in graph.edges().iter().enumerate() {
        let mut len2 = 0.0;
        for a in 0..d {
            let v = p[d * edge.head + a] - p[d * edge.tail + a];
            g[a] = v;
            len2 += v * v;
        }
        let len = len2.sqrt();
        if !(len > SEPARATION_EPS) {
            let (i, j) = edge.labels();
            return Err(Error::DegenerateEdge(i, j));
        }
        let target = &g_star[d * k..d * (k + 1)];
        let mut dot = 0.0;
        for a in 0..d {
            g[a] /= len;
            dot += g[a] * target[a];
        }
        for a in 0..d {
            let proj = target[a] - g[a] * dot;
            out[d * edge.tail + a] -= proj;
            out[d * edge.head + a] += proj;
        }
    }
    Ok(())
}

/// `v = H̄ᵀ diag(P_{g_k}) g*`.
pub fn control_velocity(
    graph: &Graph,
    constraints: &BearingConstraints,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = constraints.dim();
    check_sizes(graph, constraints, p)?;
    let mut v = DVector::zeros(p.len());
    control_velocity_into(
        graph,
        d,
        constraints.stacked().as_slice(),
        p.as_slice(),
        v.as_mut_slice(),
    )?;
    Ok(v)
}

fn check_sizes(graph: &Graph, constraints: &BearingConstraints, p: &DVector<f64>) -> Result<()> {
    let d = constraints.dim();
    if constraints.edge_count() != graph.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.edge_count(),
            found: constraints.edge_count(),
        });
    }
    if p.len() != d * graph.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: d * graph.vertex_count(),
            found: p.len(),
        });
    }
    Ok(())
}

/// Jacobian `A = ∂v/∂p` of the control law. Off-diagonal blocks are
/// `A_ij = G_ij P_{g_ij} / ‖e_ij‖` with `G_ij = (g_ijᵀ g*_ij) I + g_ij g*_ijᵀ`;
/// diagonal blocks are `A_ii = -Σ_j A_ij`.
pub fn jacobian(
    graph: &Graph,
    constraints: &BearingConstraints,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_sizes(graph, constraints, p)?;
    let d = constraints.dim();
    let bs = crate::bearing::bearings_of(graph, d, p.as_slice())?;
    let mut a = DMatrix::zeros(p.len(), p.len());
    for (k, edge) in graph.edges().iter().enumerate() {
        let g = DVector::from_column_slice(bs.bearing(k));
        let gs = DVector::from_column_slice(constraints.bearing(k));
        let big_g = DMatrix::identity(d, d) * g.dot(&gs) + &g * gs.transpose();
        let proj = DMatrix::identity(d, d) - &g * g.transpose();
        // reversing the edge negates both g and g*, leaving the block unchanged
        let block = big_g * proj / bs.lengths[k];
        let (i, j) = (edge.tail, edge.head);
        let mut add = |r: usize, c: usize, sign: f64| {
            let mut view = a.view_mut((d * r, d * c), (d, d));
            view += &block * sign;
        };
        add(i, j, 1.0);
        add(j, i, 1.0);
        add(i, i, -1.0);
        add(j, j, -1.0);
    }
    Ok(a)
}

/// Equilibrium a configuration sits at, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equilibrium {
    Desired,
    Reflected,
    None,
}

/// Classifies `p` against the target `p*` and its point reflection through
/// the centroid, relative to `‖r*‖`.
pub fn classify_equilibrium(
    p: &DVector<f64>,
    p_star: &DVector<f64>,
    d: usize,
    tol: f64,
) -> Equilibrium {
    let r_star = geometry::centered(p_star, d).norm();
    if (p - p_star).norm() <= tol * r_star {
        Equilibrium::Desired
    } else if (p - geometry::point_reflection(p_star, d)).norm() <= tol * r_star {
        Equilibrium::Reflected
    } else {
        Equilibrium::None
    }
}

/// Largest initial error `‖δ(0)‖` that keeps every pair of agents further
/// apart than `gamma`: `(min_{i≠j} ‖p*_i - p*_j‖ - gamma) / √n`.
pub fn collision_bound(p_star: &DVector<f64>, d: usize, gamma: f64) -> Result<f64> {
    let n = geometry::agent_count(p_star, d);
    let (dmin, _) = geometry::min_pair_distance(p_star.as_slice(), d);
    if !(gamma >= 0.0 && gamma < dmin) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [0, {dmin}), got {gamma}"
        )));
    }
    Ok((dmin - gamma) / (n as f64).sqrt())
}

/// Smallest positive eigenvalue `λ_{d+2}` of `R̃ᵀ R̃`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityDegree {
    pub lambda: f64,
    /// False when the constraints are not infinitesimally bearing rigid;
    /// `lambda` is then numerically zero.
    pub rigid: bool,
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

pub fn degree_of_rigidity(
    constraints: &BearingConstraints,
    graph: &Graph,
    tol: f64,
) -> Result<RigidityDegree> {
    let d = constraints.dim();
    let r = constraint_matrix(constraints, graph)?;
    let rank = linalg::rank(&r, tol)?;
    let gram = r.transpose() * &r;
    let mut eigenvalues: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let lambda = eigenvalues.get(d + 1).copied().unwrap_or(0.0);
    Ok(RigidityDegree {
        lambda,
        rigid: rank == d * graph.vertex_count() - d - 1,
        eigenvalues,
    })
}

/// Error coordinates of the global-frame closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalControlState {
    pub dim: usize,
    pub p: DVector<f64>,
    pub p_star: DVector<f64>,
    /// `δ = p - p*`.
    pub delta: DVector<f64>,
    /// `r = p - 1 ⊗ p̄`.
    pub r: DVector<f64>,
    /// `r* = p* - 1 ⊗ p̄*`.
    pub r_star: DVector<f64>,
}

impl GlobalControlState {
    pub fn new(p: DVector<f64>, p_star: DVector<f64>, dim: usize) -> Self {
        GlobalControlState {
            delta: &p - &p_star,
            r: geometry::centered(&p, dim),
            r_star: geometry::centered(&p_star, dim),
            dim,
            p,
            p_star,
        }
    }

    /// `| ‖δ + r*‖ - ‖r*‖ |`; zero while the state stays on its sphere.
    pub fn sphere_residual(&self) -> f64 {
        ((&self.delta + &self.r_star).norm() - self.r_star.norm()).abs()
    }

    /// `V = ‖δ‖² / 2`.
    pub fn lyapunov(&self) -> f64 {
        0.5 * self.delta.norm_squared()
    }

    /// Angle between `δ` and `-r*`; `π/2` at `δ = 0`.
    pub fn theta(&self) -> f64 {
        angle_to_reflection(&self.delta, &self.r_star)
    }
}

pub(crate) fn angle_to_reflection(delta: &DVector<f64>, r_star: &DVector<f64>) -> f64 {
    let nd = delta.norm();
    let nr = r_star.norm();
    if nd == 0.0 || nr == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    (-delta.dot(r_star) / (nd * nr)).clamp(-1.0, 1.0).acos()
}

/// Diagnostic convergence constants: `α = min_k ‖e*_k‖ / (4 (n-1) s²)` and
/// the exponential rate `K = 2 α λ_{d+2} sin²θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceConstants {
    pub alpha: f64,
    pub lambda: f64,
    pub theta0: f64,
    pub rate: f64,
}

pub fn convergence_constants(
    graph: &Graph,
    constraints: &BearingConstraints,
    p0: &DVector<f64>,
    p_star: &DVector<f64>,
    tol: f64,
) -> Result<ConvergenceConstants> {
    let d = constraints.dim();
    let n = graph.vertex_count();
    let bs = crate::bearing::bearings_of(graph, d, p_star.as_slice())?;
    let min_len = bs.lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let s = geometry::scale(p_star, d);
    let alpha = min_len / (4.0 * (n as f64 - 1.0) * s * s);
    let lambda = degree_of_rigidity(constraints, graph, tol)?.lambda;
    let state = GlobalControlState::new(p0.clone(), p_star.clone(), d);
    let theta0 = state.theta();
    Ok(ConvergenceConstants {
        alpha,
        lambda,
        theta0,
        rate: 2.0 * alpha * lambda * theta0.sin().powi(2),
    })
}
