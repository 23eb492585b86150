#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pgraph::dataset::DataSet;
use pgraph::graph::ElasticGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random labelled tree on `n` vertices: vertex `i` hangs off a uniform earlier vertex.
pub fn random_tree_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (rng.random_range(0..i), i)).collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..m).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect())
        .collect()
}

/// Leaves placed at random, every other vertex at the mean of its neighbours.
/// Solves the discrete Dirichlet problem with the leaves as boundary.
pub fn harmonic_tree_embedding(rng: &mut ChaCha8Rng, n: usize, edges: &[(usize, usize)], m: usize) -> Vec<Vec<f64>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut nodes = random_points(rng, n, m, 1.0);
    let interior: Vec<usize> = (0..n).filter(|&v| adj[v].len() >= 2).collect();
    if interior.is_empty() {
        return nodes;
    }
    let slot = |v: usize| interior.iter().position(|&u| u == v);
    let k = interior.len();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DMatrix::<f64>::zeros(k, m);
    for (r, &v) in interior.iter().enumerate() {
        a[(r, r)] = adj[v].len() as f64;
        for &u in &adj[v] {
            match slot(u) {
                Some(c) => a[(r, c)] -= 1.0,
                None => {
                    for d in 0..m {
                        b[(r, d)] += nodes[u][d];
                    }
                }
            }
        }
    }
    let y = a.lu().solve(&b).expect("Dirichlet system is regular on a tree");
    for (r, &v) in interior.iter().enumerate() {
        for d in 0..m {
            nodes[v][d] = y[(r, d)];
        }
    }
    nodes
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid, lowest index on ties.
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..centroids.len() {
        if sq(x, &centroids[j]) < sq(x, &centroids[best]) {
            best = j;
        }
    }
    best
}

/// Textbook Lloyd iteration run until the assignment stops changing.
/// Empty clusters keep their centroid.
pub fn lloyd(points: &[Vec<f64>], init: &[Vec<f64>], max_rounds: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut centroids = init.to_vec();
    let mut assignment: Vec<usize> = points.iter().map(|x| nearest(&centroids, x)).collect();
    for _ in 0..max_rounds {
        let m = points[0].len();
        let mut sums = vec![vec![0.0; m]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (x, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for d in 0..m {
                sums[j][d] += x[d];
            }
        }
        for j in 0..centroids.len() {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|x| nearest(&centroids, x)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    (assignment, centroids)
}

/// Elastic energy computed straight from the definition.
pub fn elastic_energy(g: &ElasticGraph, nodes: &[Vec<f64>]) -> f64 {
    let mut e = 0.0;
    for edge in &g.edges {
        e += edge.lambda * sq(&nodes[edge.a], &nodes[edge.b]);
    }
    for s in &g.stars {
        let k = s.leaves.len() as f64;
        let mean: Vec<f64> = (0..g.dimension)
            .map(|d| s.leaves.iter().map(|&l| nodes[l][d]).sum::<f64>() / k)
            .collect();
        e += s.mu * sq(&nodes[s.center], &mean);
    }
    e
}

/// Mean squared distance to assigned nodes plus elastic energy.
pub fn fixed_partition_energy(data: &[Vec<f64>], assignment: &[usize], g: &ElasticGraph, nodes: &[Vec<f64>]) -> f64 {
    let msd: f64 = data.iter().zip(assignment).map(|(x, &j)| sq(x, &nodes[j])).sum::<f64>() / data.len() as f64;
    msd + elastic_energy(g, nodes)
}

/// Nearest-node energy, the functional the EM iteration minimizes.
pub fn nearest_node_energy(data: &[Vec<f64>], g: &ElasticGraph, nodes: &[Vec<f64>]) -> f64 {
    let assignment: Vec<usize> = data.iter().map(|x| nearest(nodes, x)).collect();
    fixed_partition_energy(data, &assignment, g, nodes)
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

pub fn flatten(nodes: &[Vec<f64>]) -> Vec<f64> {
    nodes.iter().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64], m: usize) -> Vec<Vec<f64>> {
    flat.chunks(m).map(<[f64]>::to_vec).collect()
}

pub fn dataset(points: &[Vec<f64>]) -> DataSet {
    DataSet::from_rows(points).expect("valid points")
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join("uci")
}

/// A fresh cache directory pre-filled with the bundled UCI files.
pub fn uci_cache() -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    for entry in std::fs::read_dir(fixture_dir()).expect("fixtures") {
        let entry = entry.expect("fixture entry");
        let target = dir.path().join(entry.file_name());
        std::fs::create_dir_all(&target).expect("cache subdir");
        for file in std::fs::read_dir(entry.path()).expect("fixture dir") {
            let file = file.expect("fixture file");
            std::fs::copy(file.path(), target.join(file.file_name())).expect("copy fixture");
        }
    }
    dir
}
