//! Elastic energy, approximation error and the complexity measures built on them.
//!
//! All sums run in a fixed order so that repeated evaluations are bit-identical.

use crate::dataset::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::graph::{ElasticGraph, Star};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub stretching: f64,
    pub bending: f64,
    pub msd: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub fve_node: f64,
    pub fve_polyline: f64,
    pub total_variance: f64,
}

// Empty `f64` sums are -0.0; folds start at +0.0 instead.

pub fn stretching_energy(graph: &ElasticGraph) -> f64 {
    graph
        .edges
        .iter()
        .map(|e| e.lambda * sq_dist(&graph.nodes[e.a], &graph.nodes[e.b]))
        .fold(0.0, |acc, x| acc + x)
}

/// Squared distance from a star's center to the mean of its leaves.
pub fn star_deviation(graph: &ElasticGraph, star: &Star) -> f64 {
    let k = star.leaves.len() as f64;
    let center = &graph.nodes[star.center];
    (0..graph.dimension)
        .map(|d| {
            let mean = star.leaves.iter().map(|&l| graph.nodes[l][d]).sum::<f64>() / k;
            let dev = center[d] - mean;
            dev * dev
        })
        .sum()
}

pub fn bending_energy(graph: &ElasticGraph) -> f64 {
    graph
        .stars
        .iter()
        .map(|s| s.mu * star_deviation(graph, s))
        .fold(0.0, |acc, x| acc + x)
}

/// Bending energy with every star modulus taken as 1.
pub fn unit_bending_energy(graph: &ElasticGraph) -> f64 {
    graph.stars.iter().map(|s| star_deviation(graph, s)).fold(0.0, |acc, x| acc + x)
}

/// Every selected star's center sits at its leaf mean, within `tol` times the
/// extent of the embedding.
pub fn is_pluriharmonic(graph: &ElasticGraph, tol: f64) -> bool {
    let scale = graph.extent();
    graph
        .stars
        .iter()
        .all(|s| star_deviation(graph, s).sqrt() <= tol * scale)
}

fn check_dims(data: &DataSet, graph: &ElasticGraph) -> Result<()> {
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

/// Index and squared distance of the closest node; ties go to the lower index.
pub fn nearest_node(nodes: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, y) in nodes.iter().enumerate() {
        let d = sq_dist(x, y);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Squared distance from `x` to the segment `a`–`b`.
pub fn segment_sq_dist(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for d in 0..x.len() {
        let ab = b[d] - a[d];
        ab2 += ab * ab;
        dot += (x[d] - a[d]) * ab;
    }
    if ab2 == 0.0 {
        return sq_dist(x, a);
    }
    let t = (dot / ab2).clamp(0.0, 1.0);
    (0..x.len())
        .map(|d| {
            let p = a[d] + t * (b[d] - a[d]);
            (x[d] - p) * (x[d] - p)
        })
        .sum()
}

pub fn msd_nearest_node(data: &DataSet, graph: &ElasticGraph) -> Result<f64> {
    check_dims(data, graph)?;
    let total: f64 = data.points().map(|x| nearest_node(&graph.nodes, x).1).sum();
    Ok(total / data.len() as f64)
}

/// Mean squared distance to the graph drawn as a polyline: nodes plus edge segments.
pub fn msd_polyline(data: &DataSet, graph: &ElasticGraph) -> Result<f64> {
    check_dims(data, graph)?;
    let total: f64 = data
        .points()
        .map(|x| {
            let mut best = nearest_node(&graph.nodes, x).1;
            for e in &graph.edges {
                best = best.min(segment_sq_dist(x, &graph.nodes[e.a], &graph.nodes[e.b]));
            }
            best
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Fitting functional: nearest-node MSD plus stretching and bending energy.
pub fn total_energy(data: &DataSet, graph: &ElasticGraph) -> Result<EnergyBreakdown> {
    let msd = msd_nearest_node(data, graph)?;
    let stretching = stretching_energy(graph);
    let bending = bending_energy(graph);
    Ok(EnergyBreakdown {
        stretching,
        bending,
        msd,
        total: msd + stretching + bending,
    })
}

pub fn fve(data: &DataSet, graph: &ElasticGraph) -> Result<AccuracyReport> {
    check_dims(data, graph)?;
    if data.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let variance = data.total_variance();
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(AccuracyReport {
        fve_node: 1.0 - msd_nearest_node(data, graph)? / variance,
        fve_polyline: 1.0 - msd_polyline(data, graph)? / variance,
        total_variance: variance,
    })
}

/// `N_nodes^2` times the bending energy at unit moduli.
pub fn geometrical_complexity(graph: &ElasticGraph) -> f64 {
    let n = graph.node_count() as f64;
    n * n * unit_bending_energy(graph)
}
