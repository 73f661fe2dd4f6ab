//! Undirected sensing graphs with a canonical orientation.
//!
//! Every undirected edge `{i, j}` is stored once as `tail = min(i, j)`,
//! `head = max(i, j)`, and the edge list is sorted lexicographically, so the
//! edge index `k` and all matrix layouts derived from it are deterministic.
//! Vertices are 0-based internally; constructors and error messages use the
//! 1-based labels of the file formats.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An oriented edge `tail -> head` (0-based vertex indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    /// 1-based `(tail, head)` labels.
    pub fn labels(&self) -> (usize, usize) {
        (self.tail + 1, self.head + 1)
    }
}

/// Undirected graph stored with its canonical orientation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph on vertices `1..=n` from 1-based vertex pairs.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewVertices(n));
        }
        let mut seen = BTreeSet::new();
        for &(i, j) in pairs {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::VertexOutOfRange(i, j, n));
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            let edge = Edge {
                tail: i.min(j) - 1,
                head: i.max(j) - 1,
            };
            if !seen.insert(edge) {
                return Err(Error::DuplicateEdge(i, j));
            }
        }
        let edges: Vec<Edge> = seen.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for e in &edges {
            neighbors[e.tail].push(e.head);
            neighbors[e.head].push(e.tail);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges,
            neighbors,
        })
    }

    /// The complete graph on `n` vertices.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewVertices(n));
        }
        let pairs: Vec<_> = (1..=n)
            .flat_map(|i| ((i + 1)..=n).map(move |j| (i, j)))
            .collect();
        Graph::new(n, &pairs)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order; the position in this slice is the edge index.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sorted 0-based neighbor set of vertex `i` (0-based).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Index of the canonical edge joining `i` and `j` (0-based), if any.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = Edge {
            tail: i.min(j),
            head: i.max(j),
        };
        self.edges.binary_search(&key).ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        visited.into_iter().all(|v| v)
    }

    /// 1-based edge list in canonical order.
    pub fn edge_labels(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(Edge::labels).collect()
    }

    /// Incidence matrix lifted to dimension `d`: `H ⊗ I_d`, of size
    /// `dm × dn`. Row block `k` carries `-I_d` at the tail and `+I_d` at the
    /// head. With `d = 1` this is the plain `m × n` incidence matrix.
    pub fn incidence_matrix(&self, d: usize) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(d * self.edges.len(), d * self.n);
        for (k, e) in self.edges.iter().enumerate() {
            for a in 0..d {
                h[(d * k + a, d * e.tail + a)] = -1.0;
                h[(d * k + a, d * e.head + a)] = 1.0;
            }
        }
        h
    }
}
