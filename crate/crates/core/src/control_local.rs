//! Formation control in `R³` without a shared frame.
//!
//! Every agent measures bearings and relative orientations in its own body
//! frame. Orientations are driven to a common value while positions follow
//! a bearing-only law expressed in the body frame.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::Serialize;

use crate::bearing::SEPARATION_EPS;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::target::BearingConstraints;

const ORTHO_TOL: f64 = 1e-9;

/// `[x]×`, so that `skew(x) y = x × y`.
pub fn skew(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x[2], x[1], x[2], 0.0, -x[0], -x[1], x[0], 0.0)
}

/// Inverse of [`skew`]; rejects matrices with `‖M + Mᵀ‖ > 1e-9`.
pub fn unskew(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asym = (m + m.transpose()).norm();
    if !(asym <= 1e-9) {
        return Err(Error::NotSkewSymmetric(asym));
    }
    Ok(unskew_unchecked(m))
}

fn unskew_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Accepts `m` when `mᵀm = I` and `det m = 1` within `1e-9`.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if !(ortho <= ORTHO_TOL && (det - 1.0).abs() <= ORTHO_TOL) {
            return Err(Error::InvalidParameter(format!(
                "not a rotation: orthogonality error {ortho:e}, determinant {det}"
            )));
        }
        Ok(Rotation(m))
    }

    /// From nine row-major entries.
    pub fn from_row_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::DimensionMismatch {
                expected: 9,
                found: v.len(),
            });
        }
        Rotation::new(Matrix3::from_row_slice(v))
    }

    /// Rotation by `angle` about the z axis.
    pub fn about_z(angle: f64) -> Self {
        so3_exp(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Geodesic angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Closest rotation to `m` in the Frobenius norm (polar factor), or `None`
/// when `m` is numerically singular.
pub fn project_to_so3(m: &Matrix3<f64>) -> Option<Rotation> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * svd.singular_values.max().max(1e-300)) {
        return None;
    }
    // flip the direction of the smallest singular value if needed
    let mut fix = Matrix3::identity();
    let k = svd.singular_values.imin();
    fix[(k, k)] = (u * v_t).determinant().signum();
    Some(Rotation(u * fix * v_t))
}

/// Rodrigues' formula for `exp([x]×)`.
pub fn so3_exp(x: &Vector3<f64>) -> Rotation {
    let theta = x.norm();
    let k = skew(x);
    let (a, b) = if theta < 1e-8 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Position and orientation of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

/// Poses of all agents with their sensing graph and body-frame constraints.
#[derive(Debug, Clone)]
pub struct LocalFormationState {
    poses: Vec<AgentPose>,
    graph: Graph,
    constraints: BearingConstraints,
}

impl LocalFormationState {
    pub fn new(
        poses: Vec<AgentPose>,
        graph: Graph,
        constraints: BearingConstraints,
    ) -> Result<Self> {
        if constraints.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: constraints.dim(),
            });
        }
        if poses.len() != graph.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.vertex_count(),
                found: poses.len(),
            });
        }
        if constraints.edge_count() != graph.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.edge_count(),
                found: constraints.edge_count(),
            });
        }
        for e in graph.edges() {
            if !((poses[e.head].position - poses[e.tail].position).norm() > SEPARATION_EPS) {
                let (i, j) = e.labels();
                return Err(Error::DegenerateEdge(i, j));
            }
        }
        Ok(LocalFormationState {
            poses,
            graph,
            constraints,
        })
    }

    pub fn poses(&self) -> &[AgentPose] {
        &self.poses
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn constraints(&self) -> &BearingConstraints {
        &self.constraints
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn rotations(&self) -> Vec<Matrix3<f64>> {
        self.poses.iter().map(|p| *p.rotation.matrix()).collect()
    }
}

/// Desired bearing from `i` to its neighbour through canonical edge `k`.
fn directed_target(constraints: &BearingConstraints, k: usize, reversed: bool) -> Vector3<f64> {
    let g = Vector3::from_column_slice(constraints.bearing(k));
    if reversed {
        -g
    } else {
        g
    }
}

/// Body-frame inputs of agent `i`, computed from local bearings
/// `g^b_ij = Q_iᵀ g_ij` and relative orientations `Q_iᵀ Q_j` only.
fn body_inputs(
    graph: &Graph,
    constraints: &BearingConstraints,
    positions: &[Vector3<f64>],
    rotations: &[Matrix3<f64>],
    i: usize,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let qi_t = rotations[i].transpose();
    let mut v = Vector3::zeros();
    let mut w_sum = Matrix3::zeros();
    for &j in graph.neighbors(i) {
        let k = graph.edge_index(i, j).expect("neighbour implies edge");
        let e = positions[j] - positions[i];
        let len = e.norm();
        if !(len > SEPARATION_EPS) {
            let (a, b) = graph.edges()[k].labels();
            return Err(Error::DegenerateEdge(a, b));
        }
        let g_body = qi_t * (e / len);
        let rel = qi_t * rotations[j];
        let target = directed_target(constraints, k, i > j);
        let y = target + rel * target;
        v -= y - g_body * g_body.dot(&y);
        w_sum += rel.transpose() - rel;
    }
    // Σ (Q_jᵀQ_i - Q_iᵀQ_j) is skew-symmetric by construction
    Ok((v, -unskew_unchecked(&w_sum)))
}

/// `(v_i^b, w_i^b)` for agent `i` (0-based).
pub fn body_control(i: usize, state: &LocalFormationState) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if i >= state.poses.len() {
        return Err(Error::InvalidParameter(format!(
            "agent index {i} out of range"
        )));
    }
    body_inputs(
        &state.graph,
        &state.constraints,
        &state.positions(),
        &state.rotations(),
        i,
    )
}

/// Body-frame inputs of every agent, written into the output slices.
pub(crate) fn body_inputs_all(
    graph: &Graph,
    constraints: &BearingConstraints,
    positions: &[Vector3<f64>],
    rotations: &[Matrix3<f64>],
    v_out: &mut [Vector3<f64>],
    w_out: &mut [Vector3<f64>],
) -> Result<()> {
    for i in 0..positions.len() {
        let (v, w) = body_inputs(graph, constraints, positions, rotations, i)?;
        v_out[i] = v;
        w_out[i] = w;
    }
    Ok(())
}

/// Time derivatives of every position and orientation.
pub type StateDerivative = (Vec<Vector3<f64>>, Vec<Matrix3<f64>>);

/// Global-frame closed loop: `ṗ_i = -Σ P_{g_ij}(Q_i + Q_j) g*_ij` and
/// `Q̇_i = -Σ Q_i (Q_jᵀQ_i - Q_iᵀQ_j)`.
pub fn closed_loop_derivative(state: &LocalFormationState) -> Result<StateDerivative> {
    let positions = state.positions();
    let rotations = state.rotations();
    let n = positions.len();
    let mut p_dot = vec![Vector3::zeros(); n];
    let mut q_dot = vec![Matrix3::zeros(); n];
    for i in 0..n {
        for &j in state.graph.neighbors(i) {
            let k = state
                .graph
                .edge_index(i, j)
                .expect("neighbour implies edge");
            let e = positions[j] - positions[i];
            let len = e.norm();
            if !(len > SEPARATION_EPS) {
                let (a, b) = state.graph.edges()[k].labels();
                return Err(Error::DegenerateEdge(a, b));
            }
            let g = e / len;
            let target = directed_target(&state.constraints, k, i > j);
            let y = (rotations[i] + rotations[j]) * target;
            p_dot[i] -= y - g * g.dot(&y);
            q_dot[i] -= rotations[i]
                * (rotations[j].transpose() * rotations[i]
                    - rotations[i].transpose() * rotations[j]);
        }
    }
    Ok((p_dot, q_dot))
}

/// `‖h‖` with `h_i = Σ_j P_{g_ij} (2Q* - Q_i - Q_j) g*_ij`.
pub fn input_norm_h(state: &LocalFormationState, q_star: &Rotation) -> Result<f64> {
    let positions = state.positions();
    let rotations = state.rotations();
    h_norm(
        &state.graph,
        &state.constraints,
        &positions,
        &rotations,
        q_star.matrix(),
    )
}

pub(crate) fn h_norm(
    graph: &Graph,
    constraints: &BearingConstraints,
    positions: &[Vector3<f64>],
    rotations: &[Matrix3<f64>],
    q_star: &Matrix3<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..positions.len() {
        let mut h = Vector3::zeros();
        for &j in graph.neighbors(i) {
            let k = graph.edge_index(i, j).expect("neighbour implies edge");
            let e = positions[j] - positions[i];
            let len = e.norm();
            if !(len > SEPARATION_EPS) {
                let (a, b) = graph.edges()[k].labels();
                return Err(Error::DegenerateEdge(a, b));
            }
            let g = e / len;
            let target = directed_target(constraints, k, i > j);
            let y = (q_star * 2.0 - rotations[i] - rotations[j]) * target;
            h += y - g * g.dot(&y);
        }
        total += h.norm_squared();
    }
    Ok(total.sqrt())
}

/// `max_{i,j} ‖Q_iᵀ Q_j - I‖_F`.
pub fn sync_error(rotations: &[Matrix3<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..rotations.len() {
        for j in (i + 1)..rotations.len() {
            let rel = rotations[i].transpose() * rotations[j];
            worst = worst.max((rel - Matrix3::identity()).norm());
        }
    }
    worst
}

/// Best-effort test for a common reference `Q₀` with every `Q₀ᵀQ_i` at an
/// angle below `π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncAssumption {
    Satisfied,
    NotSatisfied,
    Inconclusive,
}

/// Polar projection of the arithmetic mean of the rotations.
pub fn mean_rotation(rotations: &[Matrix3<f64>]) -> Option<Rotation> {
    if rotations.is_empty() {
        return None;
    }
    let sum: Matrix3<f64> = rotations.iter().sum();
    project_to_so3(&(sum / rotations.len() as f64))
}

pub fn check_sync_assumption(rotations: &[Rotation]) -> SyncAssumption {
    const MARGIN: f64 = 1e-9;
    let mats: Vec<Matrix3<f64>> = rotations.iter().map(|r| *r.matrix()).collect();
    for i in 0..rotations.len() {
        for j in (i + 1)..rotations.len() {
            if (rotations[i].transpose() * rotations[j]).angle() >= std::f64::consts::PI - MARGIN {
                return SyncAssumption::NotSatisfied;
            }
        }
    }
    let Some(q0) = mean_rotation(&mats) else {
        return SyncAssumption::Inconclusive;
    };
    let inside = rotations
        .iter()
        .all(|r| (q0.transpose() * *r).angle() < std::f64::consts::FRAC_PI_2 - MARGIN);
    if inside {
        SyncAssumption::Satisfied
    } else {
        SyncAssumption::Inconclusive
    }
}

/// Random rotation with a uniformly distributed axis and an angle uniform in
/// `[0, max_angle]`.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, max_angle: f64) -> Rotation {
    let axis = loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = if max_angle > 0.0 {
        rng.gen_range(0.0..=max_angle)
    } else {
        0.0
    };
    so3_exp(&(axis * angle))
}

/// Multiplies `q` by `exp([w]× dt)` on the right and re-projects onto SO(3).
pub(crate) fn advance(q: &Matrix3<f64>, w: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
    let next = q * so3_exp(&(w * dt)).0;
    project_to_so3(&next).map(|r| r.0).unwrap_or(next)
}
