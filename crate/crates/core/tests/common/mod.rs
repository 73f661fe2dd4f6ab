//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use bearingform::{Framework, Graph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rank by Gaussian elimination with complete pivoting; pivots below
/// `rel_tol * max|a_ij|` count as zero.
pub fn elimination_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.amax();
    if scale == 0.0 {
        return 0;
    }
    let tol = rel_tol * scale;
    let mut rank = 0;
    while rank < rows.min(cols) {
        let mut best = (0.0, rank, rank);
        for r in rank..rows {
            for c in rank..cols {
                if a[(r, c)].abs() > best.0 {
                    best = (a[(r, c)].abs(), r, c);
                }
            }
        }
        if best.0 <= tol {
            break;
        }
        a.swap_rows(rank, best.1);
        a.swap_columns(rank, best.2);
        for r in (rank + 1)..rows {
            let f = a[(r, rank)] / a[(rank, rank)];
            if f != 0.0 {
                for c in rank..cols {
                    let v = a[(rank, c)];
                    a[(r, c)] -= f * v;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Jacobian of the stacked bearings, written out entry by entry:
/// `∂g_ij/∂p_j = (I - g gᵀ)/‖e‖ = -∂g_ij/∂p_i`.
pub fn bearing_jacobian(points: &[Vec<f64>], edges: &[(usize, usize)]) -> DMatrix<f64> {
    let d = points[0].len();
    let mut sorted: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(i, j)| (i.min(j) - 1, i.max(j) - 1))
        .collect();
    sorted.sort();
    let mut r = DMatrix::zeros(d * sorted.len(), d * points.len());
    for (k, &(i, j)) in sorted.iter().enumerate() {
        let e: Vec<f64> = (0..d).map(|a| points[j][a] - points[i][a]).collect();
        let len = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        for a in 0..d {
            for b in 0..d {
                let id = if a == b { 1.0 } else { 0.0 };
                let v = (id - e[a] * e[b] / (len * len)) / len;
                r[(d * k + a, d * j + b)] = v;
                r[(d * k + a, d * i + b)] = -v;
            }
        }
    }
    r
}

/// Jacobian of the half squared edge lengths.
pub fn distance_jacobian(points: &[Vec<f64>], edges: &[(usize, usize)]) -> DMatrix<f64> {
    let d = points[0].len();
    let mut sorted: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(i, j)| (i.min(j) - 1, i.max(j) - 1))
        .collect();
    sorted.sort();
    let mut r = DMatrix::zeros(sorted.len(), d * points.len());
    for (k, &(i, j)) in sorted.iter().enumerate() {
        for a in 0..d {
            let e = points[j][a] - points[i][a];
            r[(k, d * j + a)] = e;
            r[(k, d * i + a)] = -e;
        }
    }
    r
}

/// Connected graph on `n` vertices: a random spanning tree plus each other
/// pair with probability `p`. Labels are 1-based.
pub fn random_connected_edges<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 2..=n {
        edges.push((rng.gen_range(1..v), v));
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            if !edges.contains(&(i, j)) && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Points uniform in `[-1, 1]^d` with all pairs at least `min_sep` apart.
pub fn random_points<R: Rng>(rng: &mut R, n: usize, d: usize, min_sep: f64) -> Vec<Vec<f64>> {
    loop {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ok = (0..n).all(|i| {
            ((i + 1)..n).all(|j| {
                let s: f64 = (0..d).map(|a| (pts[i][a] - pts[j][a]).powi(2)).sum();
                s.sqrt() >= min_sep
            })
        });
        if ok {
            return pts;
        }
    }
}

pub struct RandomFramework {
    pub points: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub framework: Framework,
}

pub fn random_framework<R: Rng>(rng: &mut R, n: usize, d: usize) -> RandomFramework {
    let p = rng.gen_range(0.15..0.9);
    let edges = random_connected_edges(rng, n, p);
    let points = random_points(rng, n, d, 0.1);
    let framework = Framework::from_points(&edges, &points).expect("valid random framework");
    RandomFramework {
        points,
        edges,
        framework,
    }
}

pub fn stacked(points: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        points.len() * points[0].len(),
        points.iter().flatten().copied(),
    )
}

pub fn graph_of(f: &Framework) -> &Graph {
    f.graph()
}
