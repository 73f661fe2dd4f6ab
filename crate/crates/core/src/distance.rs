//! Distance rigidity and its relation to bearing rigidity in the plane.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bearing::Framework;
use crate::error::{Error, Result};
use crate::linalg;

/// `F_D(p) = ½ [‖e_1‖², ..., ‖e_m‖²]`.
pub fn distance_function(f: &Framework) -> DVector<f64> {
    let bs = f.bearing_set();
    DVector::from_iterator(bs.lengths.len(), bs.lengths.iter().map(|l| 0.5 * l * l))
}

/// Half squared edge lengths of an arbitrary configuration over `f`'s graph.
pub fn distance_function_at(f: &Framework, p: &DVector<f64>) -> DVector<f64> {
    let d = f.dim();
    DVector::from_iterator(
        f.graph().edge_count(),
        f.graph().edges().iter().map(|e| {
            (0..d)
                .map(|a| {
                    let v = p[d * e.head + a] - p[d * e.tail + a];
                    v * v
                })
                .sum::<f64>()
                * 0.5
        }),
    )
}

/// `R_D(p) = diag(e_kᵀ) H̄`, the `m × dn` Jacobian of [`distance_function`].
pub fn distance_rigidity_matrix(f: &Framework) -> DMatrix<f64> {
    let d = f.dim();
    let bs = f.bearing_set();
    let mut rd = DMatrix::zeros(f.graph().edge_count(), d * f.agent_count());
    for (k, edge) in f.graph().edges().iter().enumerate() {
        let e = bs.edge_vector(k);
        for a in 0..d {
            rd[(k, d * edge.head + a)] = e[a];
            rd[(k, d * edge.tail + a)] = -e[a];
        }
    }
    rd
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRigidityReport {
    pub rank: usize,
    /// `dn - d(d+1)/2` when `n >= d`, otherwise `n(n-1)/2`.
    pub required_rank: usize,
    pub infinitesimally_distance_rigid: bool,
}

pub fn required_distance_rank(n: usize, d: usize) -> usize {
    if n >= d {
        d * n - d * (d + 1) / 2
    } else {
        n * (n - 1) / 2
    }
}

pub fn distance_rigidity_report(f: &Framework, tol: f64) -> Result<DistanceRigidityReport> {
    let rank = linalg::rank(&distance_rigidity_matrix(f), tol)?;
    let required_rank = required_distance_rank(f.agent_count(), f.dim());
    Ok(DistanceRigidityReport {
        rank,
        required_rank,
        infinitesimally_distance_rigid: rank == required_rank,
    })
}

/// Rotates every planar block of `dp` by +π/2: `(x, y) -> (-y, x)`.
pub fn perp_motion(dp: &DVector<f64>, dim: usize) -> Result<DVector<f64>> {
    rotate_blocks(dp, dim, 1.0)
}

/// Inverse of [`perp_motion`]: rotates every block by -π/2.
pub fn perp_motion_inverse(dp: &DVector<f64>, dim: usize) -> Result<DVector<f64>> {
    rotate_blocks(dp, dim, -1.0)
}

fn rotate_blocks(dp: &DVector<f64>, dim: usize, sign: f64) -> Result<DVector<f64>> {
    if dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "perpendicular motions are defined in the plane only, got dimension {dim}"
        )));
    }
    if !dp.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            expected: dp.len() + 1,
            found: dp.len(),
        });
    }
    let mut out = DVector::zeros(dp.len());
    for i in 0..dp.len() / 2 {
        out[2 * i] = -sign * dp[2 * i + 1];
        out[2 * i + 1] = sign * dp[2 * i];
    }
    Ok(out)
}

/// Rebuilds `R(p)` of a planar framework from its distance rigidity matrix:
/// `diag(g_k^⊥ / ‖e_k‖²) R_D(p) (I_n ⊗ Q_{π/2}ᵀ)`, with `g^⊥ = Q_{π/2} g`
/// and `Q_{π/2}` the counter-clockwise quarter turn.
pub fn bearing_matrix_via_distance(f: &Framework) -> Result<DMatrix<f64>> {
    let d = f.dim();
    if d != 2 {
        return Err(Error::InvalidParameter(format!(
            "the distance form of R(p) holds in the plane only, got dimension {d}"
        )));
    }
    let bs = f.bearing_set();
    let m = f.graph().edge_count();
    let n = f.agent_count();
    let mut left = DMatrix::zeros(2 * m, m);
    for k in 0..m {
        let g = bs.bearing(k);
        let l2 = bs.lengths[k] * bs.lengths[k];
        left[(2 * k, k)] = -g[1] / l2;
        left[(2 * k + 1, k)] = g[0] / l2;
    }
    let mut right = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        // Q_{π/2}ᵀ = [[0, 1], [-1, 0]]
        right[(2 * i, 2 * i + 1)] = 1.0;
        right[(2 * i + 1, 2 * i)] = -1.0;
    }
    Ok(left * distance_rigidity_matrix(f) * right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;
    use crate::linalg::RANK_TOL;

    fn square() -> Framework {
        Framework::from_points(
            &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)],
            &[
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![1.0, 0.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_edge_matrix() {
        let f = Framework::from_points(&[(1, 2)], &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let rd = distance_rigidity_matrix(&f);
        assert_eq!(rd.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn square_is_distance_rigid() {
        let rep = distance_rigidity_report(&square(), RANK_TOL).unwrap();
        assert_eq!(rep.rank, 5);
        assert_eq!(rep.required_rank, 5);
        assert!(rep.infinitesimally_distance_rigid);
    }

    #[test]
    fn required_rank_case_split() {
        assert_eq!(required_distance_rank(8, 3), 18);
        assert_eq!(required_distance_rank(7, 3), 15);
        assert_eq!(required_distance_rank(2, 3), 1);
        assert_eq!(required_distance_rank(4, 2), 5);
    }

    #[test]
    fn perp_motion_rotates_blocks() {
        let dp = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            perp_motion(&dp, 2).unwrap().as_slice(),
            &[0.0, 1.0, 0.0, 1.0]
        );
        let back = perp_motion_inverse(&perp_motion(&dp, 2).unwrap(), 2).unwrap();
        assert_eq!(back, dp);
        assert!(perp_motion(&DVector::zeros(6), 3).is_err());
    }

    #[test]
    fn scaling_motion_maps_to_rotation() {
        let f = square();
        let dp = geometry::centered(f.positions(), 2);
        let rot = perp_motion(&dp, 2).unwrap();
        assert!((distance_rigidity_matrix(&f) * rot).norm() <= 1e-10);
    }

    #[test]
    fn distance_form_matches_bearing_matrix() {
        let f = square();
        let diff = bearing_matrix_via_distance(&f).unwrap() - f.rigidity_matrix();
        assert!(diff.norm() <= 1e-12);
    }
}
