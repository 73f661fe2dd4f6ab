//! Reference frameworks used by the tests, the examples and the CLI.

use std::f64::consts::PI;

use crate::bearing::Framework;

/// Unit square with the diagonal `(1, 3)`; bearings `g12 = [0, 1]`,
/// `g23 = [1, 0]`, `g34 = [0, -1]`, `g41 = [-1, 0]`, `g13 = [√2/2, √2/2]`.
pub fn square() -> Framework {
    Framework::from_points(&SQUARE_EDGES, &square_points(2)).expect("valid fixture")
}

/// [`square`] placed in the plane `z = 0` of `R³`.
pub fn square_3d() -> Framework {
    Framework::from_points(&SQUARE_EDGES, &square_points(3)).expect("valid fixture")
}

/// The square without its diagonal, which is not bearing rigid.
pub fn four_cycle() -> Framework {
    Framework::from_points(&SQUARE_EDGES[..4], &square_points(2)).expect("valid fixture")
}

const SQUARE_EDGES: [(usize, usize); 5] = [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)];

fn square_points(d: usize) -> Vec<Vec<f64>> {
    [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]
        .iter()
        .map(|p| {
            let mut v = p.to_vec();
            v.resize(d, 0.0);
            v
        })
        .collect()
}

/// Unit cube with twelve sides and one space diagonal (`n = 8`, `m = 13`).
pub fn cube() -> Framework {
    let points = [
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 1.0],
        [1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0],
    ];
    let edges = [
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 1),
        (1, 5),
        (5, 6),
        (6, 2),
        (6, 7),
        (7, 3),
        (5, 8),
        (7, 8),
        (4, 8),
        (1, 7),
    ];
    Framework::from_points(&edges, &points.map(|p| p.to_vec())).expect("valid fixture")
}

/// Regular hexagonal pyramid: unit-circumradius base at `z = 0` and apex
/// `(0, 0, 1)`, with the six base sides and six lateral edges.
pub fn hexagonal_pyramid() -> Framework {
    let mut points: Vec<Vec<f64>> = (0..6)
        .map(|k| {
            let a = PI / 3.0 * k as f64;
            vec![a.cos(), a.sin(), 0.0]
        })
        .collect();
    points.push(vec![0.0, 0.0, 1.0]);
    let mut edges: Vec<(usize, usize)> = (1..=6).map(|i| (i, i % 6 + 1)).collect();
    edges.extend((1..=6).map(|i| (i, 7)));
    Framework::from_points(&edges, &points).expect("valid fixture")
}

/// Regular octagon with its sides and the chords `i -> i+2` (`m = 16`).
pub fn octagon() -> Framework {
    let points: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            let a = PI / 4.0 * k as f64;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = (1..=8).map(|i| (i, i % 8 + 1)).collect();
    edges.extend((1..=8).map(|i| (i, (i + 1) % 8 + 1)));
    Framework::from_points(&edges, &points).expect("valid fixture")
}

/// Two agents with the single bearing `g12 = [1, 0]`.
pub fn two_agents() -> Framework {
    Framework::from_points(&[(1, 2)], &[vec![-1.0, 0.0], vec![1.0, 0.0]]).expect("valid fixture")
}
