//! Grammar-driven construction of principal graphs.
//!
//! Starting from a segment on the first principal line, the builder cycles
//! through a sequence of grammars. At every application it enumerates all
//! candidate rewrites, discards the ones the structural policy forbids, scores
//! each remaining candidate by its energy after a short EM fit, keeps the best
//! one, re-fits it fully and appends a [`ComplexityRecord`] to the trace.
//!
//! The sequence is applied cyclically (`tree, tree, shrink, tree, tree, ...`)
//! until no permissible candidate is left, the number of applications reaches
//! `cc_max`, or the polyline FVE reaches the configured stop value.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::dataset::DataSet;
use crate::energy::{fve, geometrical_complexity, total_energy};
use crate::error::{Error, Result};
use crate::grammar::{enumerate_candidates, Grammar, GrammarOperation, Moduli, StructuralPolicy};
use crate::graph::{Barcode, Edge, ElasticGraph};
use crate::optimizer::{fit, FitConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BuilderConfig {
    pub grammar_sequence: Vec<Grammar>,
    pub policy: StructuralPolicy,
    /// Maximum number of grammar applications.
    pub cc_max: usize,
    pub fit: FitConfig,
    /// EM iteration cap while scoring candidates (no softening).
    pub candidate_fit_iterations: usize,
    /// Take the best shrink even when it raises the energy.
    pub allow_energy_increase_on_shrink: bool,
    /// Stop once the polyline FVE reaches this value.
    pub fve_stop: Option<f64>,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            grammar_sequence: vec![Grammar::tree(), Grammar::tree(), Grammar::shrink()],
            policy: StructuralPolicy::default(),
            cc_max: 50,
            fit: FitConfig::default(),
            candidate_fit_iterations: 10,
            allow_energy_increase_on_shrink: true,
            fve_stop: Some(0.999),
        }
    }
}

impl BuilderConfig {
    pub fn with_grammars(names: &[&str]) -> Result<Self> {
        let grammar_sequence = names.iter().map(|n| n.parse()).collect::<Result<Vec<Grammar>>>()?;
        Ok(Self {
            grammar_sequence,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grammar_sequence.is_empty() {
            return Err(Error::Config("grammar sequence is empty".into()));
        }
        if self.cc_max == 0 {
            return Err(Error::Config("cc_max must be at least 1".into()));
        }
        if self.candidate_fit_iterations == 0 {
            return Err(Error::Config("candidate_fit_iterations must be at least 1".into()));
        }
        self.fit.validate()
    }

    pub fn moduli(&self) -> Moduli {
        Moduli {
            lambda: self.fit.lambda,
            mu: self.fit.mu,
        }
    }

    /// Only principal points are grown; start from a single centroid.
    fn grows_points_only(&self) -> bool {
        self.grammar_sequence.iter().all(|g| g.name == "points")
    }
}

/// One step of a growth trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRecord {
    pub step: usize,
    pub node_count: usize,
    pub fve_node: f64,
    pub fve_polyline: f64,
    /// Stretching energy with the fitting moduli.
    pub stretching: f64,
    /// Bending energy with the fitting moduli.
    pub bending: f64,
    /// Geometrical complexity: `node_count^2` times the bending energy at unit moduli.
    pub gc: f64,
    pub barcode: Barcode,
    /// `None` for the initial graph.
    pub operation: Option<GrammarOperation>,
    pub energy: f64,
    pub historical_cc: usize,
    pub graph: ElasticGraph,
}

impl ComplexityRecord {
    pub fn measure(data: &DataSet, graph: ElasticGraph, step: usize, operation: Option<GrammarOperation>) -> Result<Self> {
        let acc = fve(data, &graph)?;
        let energy = total_energy(data, &graph)?;
        Ok(Self {
            step,
            node_count: graph.node_count(),
            fve_node: acc.fve_node,
            fve_polyline: acc.fve_polyline,
            stretching: energy.stretching,
            bending: energy.bending,
            gc: geometrical_complexity(&graph),
            barcode: graph.barcode(),
            operation,
            energy: energy.total,
            historical_cc: step,
            graph,
        })
    }

    pub fn op_kind(&self) -> &'static str {
        self.operation.map_or("init", |op| op.kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<ComplexityRecord>,
    /// Grammar applications actually performed, shrinks included.
    pub historical_cc: usize,
    /// Applications needed to build the final tree from scratch: `N_nodes - 1`.
    pub denovo_cc: usize,
    pub candidate_fit_iterations: usize,
}

impl Trace {
    pub fn final_graph(&self) -> &ElasticGraph {
        &self.records.last().expect("trace is never empty").graph
    }
}

/// A 2-node segment on the first principal line through the mean, with its ends
/// at the extreme projections of the data.
pub fn initialize(data: &DataSet) -> Result<ElasticGraph> {
    initialize_with(data, FitConfig::default().lambda)
}

pub fn initialize_with(data: &DataSet, lambda: f64) -> Result<ElasticGraph> {
    let direction = first_principal_direction(data)?;
    let mean = data.mean();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in data.points() {
        let t: f64 = x.iter().zip(&mean).zip(&direction).map(|((a, c), v)| (a - c) * v).sum();
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let at = |t: f64| -> Vec<f64> { mean.iter().zip(&direction).map(|(c, v)| c + t * v).collect() };
    let mut g = ElasticGraph::new(data.dim());
    g.add_node(at(lo));
    g.add_node(at(hi));
    g.edges.push(Edge::new(0, 1, lambda));
    Ok(g)
}

/// Unit eigenvector of the covariance with the largest eigenvalue.
pub fn first_principal_direction(data: &DataSet) -> Result<Vec<f64>> {
    Ok(principal_axes(data, 1)?.remove(0))
}

/// The `k` leading covariance eigenvectors, largest eigenvalue first. Each is
/// signed so its largest-magnitude component is positive. Fails if the leading
/// eigenvalue is not positive.
pub fn principal_axes(data: &DataSet, k: usize) -> Result<Vec<Vec<f64>>> {
    if data.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let m = data.dim();
    let cov = DMatrix::from_row_slice(m, m, &data.covariance());
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    if !(eig.eigenvalues[order[0]] > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(order
        .into_iter()
        .take(k)
        .map(|c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect())
}

fn single_centroid(data: &DataSet) -> ElasticGraph {
    let mut g = ElasticGraph::new(data.dim());
    g.add_node(data.mean());
    g
}

/// Runs the construction loop and returns the full trace.
pub fn grow(data: &DataSet, config: &BuilderConfig) -> Result<Trace> {
    config.validate()?;
    if data.total_variance() <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let moduli = config.moduli();
    let initial = if config.grows_points_only() {
        single_centroid(data)
    } else {
        initialize_with(data, moduli.lambda)?
    };
    grow_from(data, initial, config)
}

/// Runs the construction loop from a given starting graph.
pub fn grow_from(data: &DataSet, initial: ElasticGraph, config: &BuilderConfig) -> Result<Trace> {
    config.validate()?;
    let moduli = config.moduli();
    let scoring = config.fit.capped(config.candidate_fit_iterations);
    let mut records = vec![ComplexityRecord::measure(data, initial, 0, None)?];
    let mut applied = 0;
    let mut cursor = 0;
    let mut idle = 0;

    while applied < config.cc_max {
        let current = records.last().expect("trace is never empty");
        if config.fve_stop.is_some_and(|stop| current.fve_polyline >= stop) {
            break;
        }
        let grammar = &config.grammar_sequence[cursor % config.grammar_sequence.len()];
        cursor += 1;

        let candidates: Vec<_> = enumerate_candidates(&current.graph, grammar, &config.policy, moduli, Some(data))
            .into_iter()
            .filter(|c| c.permissible)
            .collect();
        if candidates.is_empty() {
            break;
        }
        let scored: Vec<(ElasticGraph, f64)> = candidates
            .par_iter()
            .map(|c| {
                let g = fit(data, &c.result, &scoring)?;
                let e = total_energy(data, &g)?.total;
                Ok((g, e))
            })
            .collect::<Result<_>>()?;
        let best = scored
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .expect("non-empty candidate list");

        if !grammar.grows() && !config.allow_energy_increase_on_shrink && scored[best].1 > current.energy {
            // Skipping every grammar in a row means nothing can change any more.
            idle += 1;
            if idle >= config.grammar_sequence.len() {
                break;
            }
            continue;
        }
        idle = 0;

        let refit = fit(data, &scored[best].0, &config.fit)?;
        applied += 1;
        records.push(ComplexityRecord::measure(data, refit, applied, Some(candidates[best].operation))?);
    }

    let denovo_cc = records.last().map_or(0, |r| r.node_count.saturating_sub(1));
    Ok(Trace {
        records,
        historical_cc: applied,
        denovo_cc,
        candidate_fit_iterations: config.candidate_fit_iterations,
    })
}

/// Flat row of a trace as written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub op_kind: String,
    pub n_nodes: usize,
    pub barcode: Barcode,
    pub fve_node: f64,
    pub fve_polyline: f64,
    pub u_e: f64,
    pub u_r: f64,
    pub gc: f64,
    pub total_energy: f64,
    pub historical_cc: usize,
}

pub fn trace_to_records(trace: &Trace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            step: r.step,
            op_kind: r.op_kind().to_string(),
            n_nodes: r.node_count,
            barcode: r.barcode.clone(),
            fve_node: r.fve_node,
            fve_polyline: r.fve_polyline,
            u_e: r.stretching,
            u_r: r.bending,
            gc: r.gc,
            total_energy: r.energy,
            historical_cc: r.historical_cc,
        })
        .collect()
}
