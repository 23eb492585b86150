//! Graph grammars for primitive elastic graphs.
//!
//! Each rule rewrites the structure locally and places any new node so that the
//! star it completes is harmonic. Stars are re-derived after every rewrite, so
//! results are always primitive.

use std::fmt;
use std::str::FromStr;

use crate::dataset::{sq_dist, DataSet};
use crate::energy::nearest_node;
use crate::error::{Error, Result};
use crate::graph::{Edge, ElasticGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    AddNode,
    BisectEdge,
    RemoveLeaf,
    RemoveEdge,
    /// `AddNode` restricted to vertices of degree <= 1; grows principal curves.
    AddTerminalNode,
    /// A new node with no edges; grows sets of principal points.
    AddDisconnectedNode,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AddNode => "add_node",
            Self::BisectEdge => "bisect_edge",
            Self::RemoveLeaf => "remove_leaf",
            Self::RemoveEdge => "remove_edge",
            Self::AddTerminalNode => "add_terminal_node",
            Self::AddDisconnectedNode => "add_disconnected_node",
        }
    }

    pub fn acts_on_edges(self) -> bool {
        matches!(self, Self::BisectEdge | Self::RemoveEdge)
    }

    pub fn grows(self) -> bool {
        !matches!(self, Self::RemoveLeaf | Self::RemoveEdge)
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::AddNode,
            Self::BisectEdge,
            Self::RemoveLeaf,
            Self::RemoveEdge,
            Self::AddTerminalNode,
            Self::AddDisconnectedNode,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown grammar rule {s:?}")))
    }
}

/// Where a rule applies. For `Edge(v, w)` under `RemoveEdge`, `v` survives and `w` is merged into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Vertex(usize),
    Edge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GrammarOperation {
    pub kind: RuleKind,
    pub site: Site,
}

impl fmt::Display for GrammarOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.site {
            Site::Vertex(v) => write!(f, "{}({v})", self.kind),
            Site::Edge(a, b) => write!(f, "{}({a},{b})", self.kind),
        }
    }
}

/// Moduli given to edges and stars created by a rewrite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moduli {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTransformation {
    pub operation: GrammarOperation,
    pub result: ElasticGraph,
    pub permissible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// `SC = |V|`.
    NodeCountBound,
    /// `SC = |S_3|` while no star of order >= 4 exists, infinite otherwise.
    BranchBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralPolicy {
    pub kind: PolicyKind,
    /// Node bound. Under `BranchBound` it caps the node count as well (0 = no cap).
    pub sc_max: usize,
    /// Allowed number of 3-stars under `BranchBound`.
    pub b_max: usize,
}

impl Default for StructuralPolicy {
    fn default() -> Self {
        Self::node_count(1000)
    }
}

impl StructuralPolicy {
    pub fn node_count(sc_max: usize) -> Self {
        Self {
            kind: PolicyKind::NodeCountBound,
            sc_max,
            b_max: 0,
        }
    }

    pub fn branches(b_max: usize) -> Self {
        Self {
            kind: PolicyKind::BranchBound,
            sc_max: 0,
            b_max,
        }
    }

    /// Structural complexity of `graph`; `None` stands for infinity.
    pub fn complexity(&self, graph: &ElasticGraph) -> Option<usize> {
        match self.kind {
            PolicyKind::NodeCountBound => Some(graph.node_count()),
            PolicyKind::BranchBound => {
                let bc = graph.barcode();
                let three = bc.stars_of_order(3);
                let higher = bc.total_stars() - three;
                (higher == 0 && three <= self.b_max).then_some(three)
            }
        }
    }

    pub fn permits(&self, graph: &ElasticGraph) -> bool {
        match self.kind {
            PolicyKind::NodeCountBound => graph.node_count() <= self.sc_max,
            PolicyKind::BranchBound => {
                self.complexity(graph).is_some() && (self.sc_max == 0 || graph.node_count() <= self.sc_max)
            }
        }
    }
}

/// An ordered set of rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub name: String,
    pub rules: Vec<RuleKind>,
}

impl Grammar {
    pub fn tree() -> Self {
        Self::named("tree", vec![RuleKind::AddNode, RuleKind::BisectEdge])
    }

    pub fn curve() -> Self {
        Self::named("curve", vec![RuleKind::AddTerminalNode])
    }

    pub fn shrink() -> Self {
        Self::named("shrink", vec![RuleKind::RemoveLeaf, RuleKind::RemoveEdge])
    }

    pub fn points() -> Self {
        Self::named("points", vec![RuleKind::AddDisconnectedNode])
    }

    fn named(name: &str, rules: Vec<RuleKind>) -> Self {
        Self {
            name: name.to_string(),
            rules,
        }
    }

    pub fn grows(&self) -> bool {
        self.rules.iter().all(|r| r.grows())
    }
}

impl FromStr for Grammar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(Self::tree()),
            "curve" => Ok(Self::curve()),
            "shrink" => Ok(Self::shrink()),
            "points" => Ok(Self::points()),
            other => Err(Error::Config(format!("unknown grammar preset {other:?}"))),
        }
    }
}

fn check_vertex(graph: &ElasticGraph, v: usize) -> Result<()> {
    if v >= graph.node_count() {
        return Err(Error::Precondition(format!("vertex {v} does not exist")));
    }
    Ok(())
}

fn check_edge(graph: &ElasticGraph, v: usize, w: usize) -> Result<usize> {
    graph
        .edge_index(v, w)
        .ok_or_else(|| Error::Precondition(format!("edge ({v}, {w}) does not exist")))
}

/// Attaches a new leaf `z` to `v`, placed so the star now centered at `v` is harmonic:
/// `z = (k+1) v - sum(old neighbors)`.
pub fn apply_add_node(graph: &ElasticGraph, v: usize, moduli: Moduli) -> Result<ElasticGraph> {
    if graph.node_count() < 2 {
        return Err(Error::Precondition("add_node needs at least two vertices".into()));
    }
    check_vertex(graph, v)?;
    let nb = graph.neighbors(v);
    let k = nb.len() as f64;
    let z: Vec<f64> = (0..graph.dimension)
        .map(|d| (k + 1.0) * graph.nodes[v][d] - nb.iter().map(|&u| graph.nodes[u][d]).sum::<f64>())
        .collect();
    let mut out = graph.clone();
    let zi = out.add_node(z);
    out.edges.push(Edge::new(v, zi, moduli.lambda));
    out.derive_primitive_stars(moduli.mu);
    Ok(out)
}

pub fn apply_add_terminal_node(graph: &ElasticGraph, v: usize, moduli: Moduli) -> Result<ElasticGraph> {
    check_vertex(graph, v)?;
    if graph.degree(v) > 1 {
        return Err(Error::Precondition(format!("vertex {v} is not terminal")));
    }
    apply_add_node(graph, v, moduli)
}

/// Adds an unconnected node. With data it splits the cell of `v`, landing on the
/// cell's point farthest from `v`; without data it lands on `v`.
pub fn apply_add_disconnected_node(
    graph: &ElasticGraph,
    v: usize,
    moduli: Moduli,
    data: Option<&DataSet>,
) -> Result<ElasticGraph> {
    check_vertex(graph, v)?;
    let position = match data {
        None => graph.nodes[v].clone(),
        Some(data) => {
            if data.dim() != graph.dimension {
                return Err(Error::DimensionMismatch {
                    data: data.dim(),
                    graph: graph.dimension,
                });
            }
            let mut best: Option<(f64, &[f64])> = None;
            for x in data.points() {
                if nearest_node(&graph.nodes, x).0 != v {
                    continue;
                }
                let d = sq_dist(x, &graph.nodes[v]);
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, x));
                }
            }
            match best {
                Some((d, x)) if d > 0.0 => x.to_vec(),
                _ => return Err(Error::Precondition(format!("cell of vertex {v} cannot be split"))),
            }
        }
    };
    let mut out = graph.clone();
    out.add_node(position);
    out.derive_primitive_stars(moduli.mu);
    Ok(out)
}

/// Replaces edge `(v, w)` by `(v, z), (z, w)` with `z` at the midpoint.
pub fn apply_bisect_edge(graph: &ElasticGraph, v: usize, w: usize, moduli: Moduli) -> Result<ElasticGraph> {
    let idx = check_edge(graph, v, w)?;
    let mid: Vec<f64> = graph.nodes[v]
        .iter()
        .zip(&graph.nodes[w])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mut out = graph.clone();
    let z = out.add_node(mid);
    out.edges[idx] = Edge::new(v, z, moduli.lambda);
    out.edges.push(Edge::new(z, w, moduli.lambda));
    out.derive_primitive_stars(moduli.mu);
    Ok(out)
}

pub fn apply_remove_leaf(graph: &ElasticGraph, v: usize, moduli: Moduli) -> Result<ElasticGraph> {
    check_vertex(graph, v)?;
    if graph.degree(v) != 1 {
        return Err(Error::Precondition(format!("vertex {v} is not a leaf")));
    }
    let mut out = graph.clone();
    out.remove_vertex(v);
    out.derive_primitive_stars(moduli.mu);
    Ok(out)
}

/// Contracts edge `(v, w)` into `v`: `w` is deleted and its other neighbors are
/// re-attached to `v`. Both endpoints must be star centers.
pub fn apply_remove_edge(graph: &ElasticGraph, v: usize, w: usize, moduli: Moduli) -> Result<ElasticGraph> {
    let idx = check_edge(graph, v, w)?;
    if graph.degree(v) < 2 || graph.degree(w) < 2 {
        return Err(Error::Precondition(format!(
            "edge ({v}, {w}) has a terminal endpoint; use remove_leaf"
        )));
    }
    let mut out = graph.clone();
    out.edges.remove(idx);
    let mut moved = Vec::new();
    out.edges.retain(|e| match e.other(w) {
        Some(u) => {
            moved.push(Edge::new(v, u, e.lambda));
            false
        }
        None => true,
    });
    for e in moved {
        if !out.has_edge(e.a, e.b) {
            out.edges.push(e);
        }
    }
    out.remove_vertex(w);
    out.derive_primitive_stars(moduli.mu);
    Ok(out)
}

/// Applies `op` to `graph`.
pub fn apply(graph: &ElasticGraph, op: GrammarOperation, moduli: Moduli, data: Option<&DataSet>) -> Result<ElasticGraph> {
    match (op.kind, op.site) {
        (RuleKind::AddNode, Site::Vertex(v)) => apply_add_node(graph, v, moduli),
        (RuleKind::AddTerminalNode, Site::Vertex(v)) => apply_add_terminal_node(graph, v, moduli),
        (RuleKind::AddDisconnectedNode, Site::Vertex(v)) => apply_add_disconnected_node(graph, v, moduli, data),
        (RuleKind::RemoveLeaf, Site::Vertex(v)) => apply_remove_leaf(graph, v, moduli),
        (RuleKind::BisectEdge, Site::Edge(v, w)) => apply_bisect_edge(graph, v, w, moduli),
        (RuleKind::RemoveEdge, Site::Edge(v, w)) => apply_remove_edge(graph, v, w, moduli),
        (kind, site) => Err(Error::Precondition(format!("rule {kind} cannot apply at {site:?}"))),
    }
}

/// Every site a rule could apply to, in enumeration order.
fn sites(graph: &ElasticGraph, kind: RuleKind) -> Vec<Site> {
    match kind {
        RuleKind::BisectEdge => graph.edges.iter().map(|e| Site::Edge(e.a, e.b)).collect(),
        RuleKind::RemoveEdge => graph
            .edges
            .iter()
            .flat_map(|e| [Site::Edge(e.a, e.b), Site::Edge(e.b, e.a)])
            .collect(),
        _ => (0..graph.node_count()).map(Site::Vertex).collect(),
    }
}

/// Applies every rule of `grammar` at every applicable site, rule by rule and
/// site by site. Sites failing a rule's precondition are skipped. `data` is only
/// consulted by `AddDisconnectedNode`.
pub fn enumerate_candidates(
    graph: &ElasticGraph,
    grammar: &Grammar,
    policy: &StructuralPolicy,
    moduli: Moduli,
    data: Option<&DataSet>,
) -> Vec<CandidateTransformation> {
    let mut out = Vec::new();
    for &kind in &grammar.rules {
        for site in sites(graph, kind) {
            let operation = GrammarOperation { kind, site };
            if let Ok(result) = apply(graph, operation, moduli, data) {
                let permissible = policy.permits(&result);
                out.push(CandidateTransformation {
                    operation,
                    result,
                    permissible,
                });
            }
        }
    }
    out
}
