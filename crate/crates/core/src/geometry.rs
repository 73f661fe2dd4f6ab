//! Helpers on stacked configurations `p = [p_1; ...; p_n]` in `R^{dn}`.

use nalgebra::DVector;

pub fn agent_count(p: &DVector<f64>, d: usize) -> usize {
    p.len() / d
}

/// Position of agent `i` (0-based) as a slice.
pub fn point(p: &[f64], d: usize, i: usize) -> &[f64] {
    &p[d * i..d * (i + 1)]
}

pub fn centroid(p: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = agent_count(p, d);
    let mut c = DVector::zeros(d);
    for i in 0..n {
        for a in 0..d {
            c[a] += p[d * i + a];
        }
    }
    c / n as f64
}

/// `p - 1 ⊗ centroid(p)`.
pub fn centered(p: &DVector<f64>, d: usize) -> DVector<f64> {
    let c = centroid(p, d);
    DVector::from_fn(p.len(), |r, _| p[r] - c[r % d])
}

/// Quadratic mean distance of the agents to their centroid.
pub fn scale(p: &DVector<f64>, d: usize) -> f64 {
    centered(p, d).norm() / (agent_count(p, d) as f64).sqrt()
}

/// `1 ⊗ x` for an `n`-agent stack.
pub fn replicate(x: &DVector<f64>, n: usize) -> DVector<f64> {
    let d = x.len();
    DVector::from_fn(d * n, |r, _| x[r % d])
}

/// Point reflection of `p` through its centroid: `2(1 ⊗ p̄) - p`.
pub fn point_reflection(p: &DVector<f64>, d: usize) -> DVector<f64> {
    let c = centroid(p, d);
    DVector::from_fn(p.len(), |r, _| 2.0 * c[r % d] - p[r])
}

pub fn distance(p: &[f64], d: usize, i: usize, j: usize) -> f64 {
    point(p, d, i)
        .iter()
        .zip(point(p, d, j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Smallest pairwise distance and the (0-based) pair attaining it.
pub fn min_pair_distance(p: &[f64], d: usize) -> (f64, (usize, usize)) {
    let n = p.len() / d;
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = distance(p, d, i, j);
            if dist < best.0 {
                best = (dist, (i, j));
            }
        }
    }
    best
}

/// Largest distance of an agent from the centroid.
pub fn max_radius(p: &DVector<f64>, d: usize) -> f64 {
    let r = centered(p, d);
    (0..agent_count(p, d))
        .map(|i| r.rows(d * i, d).norm())
        .fold(0.0, f64::max)
}

/// Largest pairwise distance.
pub fn diameter(p: &[f64], d: usize) -> f64 {
    let n = p.len() / d;
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(distance(p, d, i, j));
        }
    }
    best
}

/// Pads every `d`-block of `p` with zeros up to `d_new` entries.
pub fn zero_pad(p: &DVector<f64>, d: usize, d_new: usize) -> DVector<f64> {
    let n = agent_count(p, d);
    DVector::from_fn(n * d_new, |r, _| {
        let (i, a) = (r / d_new, r % d_new);
        if a < d {
            p[d * i + a]
        } else {
            0.0
        }
    })
}
