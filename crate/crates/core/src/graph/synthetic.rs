//! Small seeded graph generators for tests, examples and audits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, EdgeOptions, Graph};
use crate::matrix::Matrix;

/// Erdős–Rényi graph: each unordered pair linked with probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges, EdgeOptions::default()).expect("generated edges are valid")
}

pub fn random_features(n: usize, f: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(n, f, (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Two disjoint cliques of `size` nodes. Class 0 nodes carry feature
/// `[1, 0]`, class 1 nodes `[0, 1]`.
pub fn two_cliques(size: usize) -> (Graph, Dataset) {
    let n = 2 * size;
    let mut edges = Vec::new();
    for block in 0..2 {
        let base = block * size;
        for u in 0..size {
            for v in u + 1..size {
                edges.push((base + u, base + v));
            }
        }
    }
    let graph = Graph::from_edges(n, &edges, EdgeOptions::default()).unwrap();
    let labels: Vec<usize> = (0..n).map(|v| v / size).collect();
    let features = Matrix::from_vec(
        n,
        2,
        labels
            .iter()
            .flat_map(|&y| if y == 0 { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect(),
    );
    let dataset = Dataset::new("two-cliques", features, labels, 2).unwrap();
    (graph, dataset)
}

/// Stochastic block model with class-dependent features.
///
/// Each class owns a random prototype vector; a node's features are its
/// prototype scaled by `signal` plus uniform noise in `[-1, 1]`. Pairs in
/// the same class link with `p_in`, others with `p_out`, so
/// `p_in < p_out` yields a heterophilous graph.
#[derive(Debug, Clone, Copy)]
pub struct BlockModel {
    pub nodes_per_class: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub features: usize,
    pub signal: f64,
}

impl BlockModel {
    pub fn sample(&self, seed: u64) -> (Graph, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.nodes_per_class * self.classes;
        let labels: Vec<usize> = (0..n).map(|v| v % self.classes).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if labels[u] == labels[v] {
                    self.p_in
                } else {
                    self.p_out
                };
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let protos: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| (0..self.features).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut data = Vec::with_capacity(n * self.features);
        for &y in &labels {
            for j in 0..self.features {
                data.push(self.signal * protos[y][j] + rng.gen_range(-1.0..1.0));
            }
        }
        let graph = Graph::from_edges(n, &edges, EdgeOptions::default()).unwrap();
        let dataset = Dataset::new(
            "block-model",
            Matrix::from_vec(n, self.features, data),
            labels,
            self.classes,
        )
        .unwrap();
        (graph, dataset)
    }
}
