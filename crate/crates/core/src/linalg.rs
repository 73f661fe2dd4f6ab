//! Numerical rank and null spaces via the singular value decomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-10;

/// Rank, singular values and an orthonormal null-space basis of a matrix.
#[derive(Debug, Clone)]
pub struct RankNullspace {
    pub rank: usize,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Orthonormal basis of the null space, one column per vector.
    pub null_basis: DMatrix<f64>,
    /// Absolute threshold the singular values were compared against.
    pub threshold: f64,
}

impl RankNullspace {
    pub fn nullity(&self) -> usize {
        self.null_basis.ncols()
    }
}

/// Computes the numerical rank of `m` and an orthonormal basis of its null
/// space. A singular value counts towards the rank when it exceeds
/// `tol * sigma_max * max(rows, cols)`.
pub fn rank_nullspace(m: &DMatrix<f64>, tol: f64) -> Result<RankNullspace> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    // Thin SVD only yields a full right basis when rows >= cols.
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = tol * sigma_max * rows.max(cols) as f64;
    let rank = singular_values
        .iter()
        .filter(|&&s| sigma_max > 0.0 && s > threshold)
        .count();
    let null_idx: Vec<usize> = order[rank..].to_vec();
    let mut null_basis = DMatrix::zeros(cols, null_idx.len());
    for (c, &i) in null_idx.iter().enumerate() {
        null_basis.set_column(c, &v_t.row(i).transpose());
    }
    // nalgebra's SVD occasionally returns inaccurate vectors for matrices with
    // many exactly vanishing singular values; fall back to the Gram matrix
    let residual = (m * &null_basis).amax();
    if null_basis.ncols() > 0 && residual > 1e-8 * sigma_max.max(1.0) {
        null_basis = gram_nullspace(m, null_idx.len());
    }
    Ok(RankNullspace {
        rank,
        singular_values: singular_values.into_iter().take(rows.min(cols)).collect(),
        null_basis,
        threshold,
    })
}

fn gram_nullspace(m: &DMatrix<f64>, nullity: usize) -> DMatrix<f64> {
    let eig = (m.transpose() * m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut basis = DMatrix::zeros(m.ncols(), nullity);
    for (c, &i) in order.iter().take(nullity).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    basis
}

/// Numerical rank with the given relative tolerance.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    rank_nullspace(m, tol).map(|r| r.rank)
}

/// Orthonormal basis of the translation subspace `span{1 ⊗ I_d}` in
/// `R^{dn}`.
pub fn translation_basis(n: usize, d: usize) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(d * n, d, |r, c| if r % d == c { scale } else { 0.0 })
}

/// Removes the component of `v` lying in the span of the orthonormal
/// columns of `basis`.
pub fn project_out(v: &DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    v - basis * (basis.transpose() * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_has_full_null_space() {
        let r = rank_nullspace(&DMatrix::zeros(2, 2), RANK_TOL).unwrap();
        assert_eq!(r.rank, 0);
        assert_eq!(r.nullity(), 2);
    }

    #[test]
    fn gram_fallback_spans_the_null_space() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let basis = gram_nullspace(&m, 2);
        assert!((&m * &basis).amax() < 1e-12);
        assert!((basis.transpose() * &basis - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn wide_matrix_null_basis_is_orthonormal() {
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0]);
        let r = rank_nullspace(&m, RANK_TOL).unwrap();
        assert_eq!(r.rank, 1);
        assert_eq!(r.nullity(), 3);
        let gram = r.null_basis.transpose() * &r.null_basis;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-10);
        assert!((&m * &r.null_basis).norm() < 1e-10);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(
            rank_nullspace(&DMatrix::zeros(0, 3), RANK_TOL),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn translation_basis_is_orthonormal() {
        let t = translation_basis(5, 3);
        assert!((t.transpose() * &t - DMatrix::identity(3, 3)).norm() < 1e-12);
    }
}
