//! EM optimization of node positions for a graph of fixed structure.
//!
//! Each step partitions the data by nearest node, then solves the linear system
//! `a Y = B` where `a = diag(|K_j|/|X|) + e + s` couples node positions through
//! the stretching (`e`) and bending (`s`) penalties, and row `j` of `B` is the
//! sum of the points in cell `K_j` divided by `|X|`. One Cholesky factorization
//! serves every ambient coordinate.

use log::debug;
use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;

use crate::dataset::{sq_dist, DataSet};
use crate::energy::{nearest_node, total_energy};
use crate::error::{Error, Result};
use crate::graph::ElasticGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub e: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
}

/// Multipliers applied to every edge and star modulus during one softening stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SofteningStage {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Stretching modulus given to new edges.
    pub lambda: f64,
    /// Bending modulus given to new stars.
    pub mu: f64,
    /// Stages run in order, reusing positions. Empty means one stage at (1, 1).
    pub softening: Vec<SofteningStage>,
    /// Per stage.
    pub max_iterations: usize,
    /// Stop once the largest node move is below this fraction of the data extent.
    pub convergence_tol: f64,
    /// Relative size of the proximal diagonal term used for singular systems.
    pub ridge: f64,
    /// Set every stretching modulus to zero after fitting.
    pub zero_lambda_after_fit: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            mu: 0.1,
            softening: vec![
                SofteningStage { lambda: 1.0, mu: 100.0 },
                SofteningStage { lambda: 1.0, mu: 10.0 },
                SofteningStage { lambda: 1.0, mu: 1.0 },
            ],
            max_iterations: 100,
            convergence_tol: 1e-4,
            ridge: 1e-12,
            zero_lambda_after_fit: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return bad("moduli must be non-negative");
        }
        if !(self.convergence_tol > 0.0 && self.ridge > 0.0) {
            return bad("convergence_tol and ridge must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        for s in &self.softening {
            if !(s.lambda >= 0.0 && s.mu >= 0.0) {
                return bad("softening multipliers must be non-negative");
            }
        }
        if self.softening.windows(2).any(|w| w[1].mu > w[0].mu) {
            return bad("softening multipliers must be non-increasing in mu");
        }
        Ok(())
    }

    /// Same moduli, one unsoftened stage capped at `iterations`.
    pub fn capped(&self, iterations: usize) -> Self {
        Self {
            softening: Vec::new(),
            max_iterations: iterations,
            zero_lambda_after_fit: false,
            ..self.clone()
        }
    }

    fn stages(&self) -> Vec<SofteningStage> {
        if self.softening.is_empty() {
            vec![SofteningStage { lambda: 1.0, mu: 1.0 }]
        } else {
            self.softening.clone()
        }
    }
}

pub fn build_star_matrix(graph: &ElasticGraph) -> DMatrix<f64> {
    let k = graph.node_count();
    let mut s = DMatrix::zeros(k, k);
    for star in &graph.stars {
        let order = star.leaves.len() as f64;
        let mu = star.mu;
        let c = star.center;
        s[(c, c)] += mu;
        for &l in &star.leaves {
            for &m in &star.leaves {
                s[(l, m)] += mu / (order * order);
            }
            s[(c, l)] -= mu / order;
            s[(l, c)] -= mu / order;
        }
    }
    s
}

pub fn build_edge_matrix(graph: &ElasticGraph) -> DMatrix<f64> {
    let k = graph.node_count();
    let mut e = DMatrix::zeros(k, k);
    for edge in &graph.edges {
        let (a, b, l) = (edge.a, edge.b, edge.lambda);
        e[(a, a)] += l;
        e[(b, b)] += l;
        e[(a, b)] -= l;
        e[(b, a)] -= l;
    }
    e
}

pub fn build_system(graph: &ElasticGraph, partition: &Partition, n_points: usize) -> SystemMatrices {
    let e = build_edge_matrix(graph);
    let s = build_star_matrix(graph);
    let mut a = &e + &s;
    for (j, &c) in partition.counts.iter().enumerate() {
        a[(j, j)] += c as f64 / n_points as f64;
    }
    SystemMatrices { e, s, a }
}

fn check_inputs(data: &DataSet, graph: &ElasticGraph) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if graph.node_count() == 0 {
        return Err(Error::InvalidGraph("graph has no vertices".into()));
    }
    if data.dim() != graph.dimension {
        return Err(Error::DimensionMismatch {
            data: data.dim(),
            graph: graph.dimension,
        });
    }
    Ok(())
}

/// Assigns each point to its nearest node (ties to the lower index).
pub fn partition(data: &DataSet, graph: &ElasticGraph) -> Result<Partition> {
    check_inputs(data, graph)?;
    let assignment: Vec<usize> = (0..data.len())
        .into_par_iter()
        .map(|i| nearest_node(&graph.nodes, data.point(i)).0)
        .collect();
    let mut counts = vec![0; graph.node_count()];
    for &j in &assignment {
        counts[j] += 1;
    }
    Ok(Partition { assignment, counts })
}

/// Energy of `graph` with the data split by a fixed `partition` rather than by
/// nearest node. This is the quadratic that one EM step minimizes.
pub fn partitioned_energy(data: &DataSet, graph: &ElasticGraph, partition: &Partition) -> f64 {
    let msd: f64 = data
        .points()
        .zip(&partition.assignment)
        .map(|(x, &j)| sq_dist(x, &graph.nodes[j]))
        .sum::<f64>()
        / data.len() as f64;
    msd + crate::energy::stretching_energy(graph) + crate::energy::bending_energy(graph)
}

/// True when some group of nodes tied together by stretching edges receives no
/// data at all; such a block of `a` has no unique solution.
fn has_unanchored_component(graph: &ElasticGraph, counts: &[usize]) -> bool {
    let n = graph.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for e in graph.edges.iter().filter(|e| e.lambda > 0.0) {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut anchored = vec![false; n];
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            let r = find(&mut parent, j);
            anchored[r] = true;
        }
    }
    (0..n).any(|j| {
        let r = find(&mut parent, j);
        !anchored[r]
    })
}

fn factor(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let max_diag = a.diagonal().iter().cloned().fold(0.0, f64::max);
    let chol = Cholesky::new(a)?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-14 * max_diag {
        None
    } else {
        Some(chol)
    }
}

/// One EM iteration with the graph's own moduli.
pub fn em_step(data: &DataSet, graph: &ElasticGraph) -> Result<ElasticGraph> {
    em_step_with_ridge(data, graph, FitConfig::default().ridge)
}

pub fn em_step_with_ridge(data: &DataSet, graph: &ElasticGraph, ridge: f64) -> Result<ElasticGraph> {
    let part = partition(data, graph)?;
    let n = data.len();
    let k = graph.node_count();
    let m = graph.dimension;
    let SystemMatrices { a, .. } = build_system(graph, &part, n);

    let mut rhs = DMatrix::zeros(k, m);
    for (x, &j) in data.points().zip(&part.assignment) {
        for d in 0..m {
            rhs[(j, d)] += x[d];
        }
    }
    rhs /= n as f64;

    let direct = if has_unanchored_component(graph, &part.counts) {
        None
    } else {
        factor(a.clone())
    };
    let solution = match direct {
        Some(chol) => chol.solve(&rhs),
        None => {
            // Proximal regularization: pull each node toward where it is now.
            let r = ridge * a.trace().max(f64::MIN_POSITIVE) / k as f64;
            debug!("singular EM system, adding proximal ridge {r:e}");
            let mut reg = a;
            for j in 0..k {
                reg[(j, j)] += r;
                for d in 0..m {
                    rhs[(j, d)] += r * graph.nodes[j][d];
                }
            }
            let chol = Cholesky::new(reg).ok_or_else(|| {
                Error::Singular("system stays singular after ridge regularization".into())
            })?;
            chol.solve(&rhs)
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite node positions".into()));
    }

    let mut out = graph.clone();
    for (j, node) in out.nodes.iter_mut().enumerate() {
        for (d, c) in node.iter_mut().enumerate() {
            *c = solution[(j, d)];
        }
    }
    Ok(out)
}

/// Per-stage iteration log from [`fit_traced`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    /// Total energy (with the stage's moduli) before the first step and after each step.
    pub energies: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
}

fn scaled(graph: &ElasticGraph, stage: SofteningStage) -> ElasticGraph {
    let mut g = graph.clone();
    g.edges.iter_mut().for_each(|e| e.lambda *= stage.lambda);
    g.stars.iter_mut().for_each(|s| s.mu *= stage.mu);
    g
}

fn max_displacement(a: &ElasticGraph, b: &ElasticGraph) -> f64 {
    a.nodes
        .iter()
        .zip(&b.nodes)
        .map(|(p, q)| sq_dist(p, q))
        .fold(0.0, f64::max)
        .sqrt()
}

fn run(data: &DataSet, graph: &ElasticGraph, config: &FitConfig, trace: bool) -> Result<(ElasticGraph, FitReport)> {
    config.validate()?;
    check_inputs(data, graph)?;
    let threshold = config.convergence_tol * data.extent();
    let mut positions = graph.nodes.clone();
    let mut report = FitReport::default();
    for stage in config.stages() {
        let mut current = scaled(graph, stage);
        current.nodes = positions;
        let mut energies = Vec::new();
        if trace {
            energies.push(total_energy(data, &current)?.total);
        }
        let mut iterations = 0;
        for _ in 0..config.max_iterations {
            let next = em_step_with_ridge(data, &current, config.ridge)?;
            iterations += 1;
            let moved = max_displacement(&current, &next);
            current = next;
            if trace {
                energies.push(total_energy(data, &current)?.total);
            }
            if moved < threshold {
                break;
            }
        }
        positions = current.nodes;
        report.energies.push(energies);
        report.iterations.push(iterations);
    }
    let mut out = graph.clone();
    out.nodes = positions;
    if config.zero_lambda_after_fit {
        out.edges.iter_mut().for_each(|e| e.lambda = 0.0);
    }
    Ok((out, report))
}

/// Iterates EM steps to convergence, once per softening stage.
pub fn fit(data: &DataSet, graph: &ElasticGraph, config: &FitConfig) -> Result<ElasticGraph> {
    run(data, graph, config, false).map(|(g, _)| g)
}

/// [`fit`], also recording the energy after every iteration.
pub fn fit_traced(data: &DataSet, graph: &ElasticGraph, config: &FitConfig) -> Result<(ElasticGraph, FitReport)> {
    run(data, graph, config, true)
}
