//! Elastic graph data model.
//!
//! An [`ElasticGraph`] is a simple undirected graph whose edges carry stretching
//! moduli and whose selected k-stars carry bending moduli, together with an
//! embedding of every vertex in R^m. Vertices are dense indices `0..node_count()`;
//! operations that delete vertices renumber the survivors compactly.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Stretching modulus.
    pub lambda: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, lambda: f64) -> Self {
        Self { a, b, lambda }
    }

    pub fn joins(&self, u: usize, v: usize) -> bool {
        (self.a == u && self.b == v) || (self.a == v && self.b == u)
    }

    pub fn other(&self, v: usize) -> Option<usize> {
        if self.a == v {
            Some(self.b)
        } else if self.b == v {
            Some(self.a)
        } else {
            None
        }
    }
}

/// A k-star: a center vertex with `k = leaves.len()` adjacent leaves. A rib is a 2-star.
#[derive(Debug, Clone, PartialEq)]
pub struct Star {
    pub center: usize,
    pub leaves: Vec<usize>,
    /// Bending modulus.
    pub mu: f64,
}

impl Star {
    pub fn order(&self) -> usize {
        self.leaves.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticGraph {
    pub dimension: usize,
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
    pub stars: Vec<Star>,
    pub primitive: bool,
}

impl ElasticGraph {
    /// An empty graph embedded in R^dimension.
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            nodes: Vec::new(),
            edges: Vec::new(),
            stars: Vec::new(),
            primitive: true,
        }
    }

    /// Builds a primitive path through `points` in order.
    pub fn path(points: &[Vec<f64>], lambda: f64, mu: f64) -> Self {
        let dimension = points.first().map_or(0, Vec::len);
        let mut g = Self::new(dimension);
        g.nodes = points.to_vec();
        for i in 1..points.len() {
            g.edges.push(Edge::new(i - 1, i, lambda));
        }
        g.derive_primitive_stars(mu);
        g
    }

    /// Builds a primitive graph from node positions and an edge list.
    pub fn from_edges(nodes: Vec<Vec<f64>>, edges: &[(usize, usize)], lambda: f64, mu: f64) -> Self {
        let dimension = nodes.first().map_or(0, Vec::len);
        let mut g = Self::new(dimension);
        g.nodes = nodes;
        g.edges = edges.iter().map(|&(a, b)| Edge::new(a, b, lambda)).collect();
        g.derive_primitive_stars(mu);
        g
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn add_node(&mut self, position: Vec<f64>) -> usize {
        self.nodes.push(position);
        self.nodes.len() - 1
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.joins(u, v))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_index(u, v).is_some()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.a == v || e.b == v).count()
    }

    /// Neighbors of `v` in ascending index order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.edges.iter().filter_map(|e| e.other(v)).collect();
        out.sort_unstable();
        out
    }

    /// Neighbor lists for every vertex, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            if e.a < adj.len() && e.b < adj.len() {
                adj[e.a].push(e.b);
                adj[e.b].push(e.a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Replaces the star list with one star per vertex of degree >= 2, over all
    /// of its neighbors, each with modulus `mu`. Marks the graph primitive.
    pub fn derive_primitive_stars(&mut self, mu: f64) {
        self.stars = self
            .adjacency()
            .into_iter()
            .enumerate()
            .filter(|(_, leaves)| leaves.len() >= 2)
            .map(|(center, leaves)| Star { center, leaves, mu })
            .collect();
        self.primitive = true;
    }

    /// Deletes vertex `v` along with its incident edges and every star that
    /// mentions it; higher indices shift down by one.
    pub fn remove_vertex(&mut self, v: usize) {
        self.nodes.remove(v);
        self.edges.retain(|e| e.a != v && e.b != v);
        self.stars.retain(|s| s.center != v && !s.leaves.contains(&v));
        let shift = |i: usize| if i > v { i - 1 } else { i };
        for e in &mut self.edges {
            e.a = shift(e.a);
            e.b = shift(e.b);
        }
        for s in &mut self.stars {
            s.center = shift(s.center);
            for l in &mut s.leaves {
                *l = shift(*l);
            }
        }
    }

    /// Connected-component label for every vertex (labels are dense, assigned in
    /// order of the lowest vertex index of each component).
    pub fn components(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.node_count()];
        let mut next = 0;
        for start in 0..self.node_count() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for &w in &adj[u] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Connected and acyclic.
    pub fn is_tree(&self) -> bool {
        let n = self.node_count();
        n > 0 && self.edges.len() + 1 == n && self.components().iter().all(|&c| c == 0)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        let bad = |msg: String| Err(Error::InvalidGraph(msg));
        for (i, p) in self.nodes.iter().enumerate() {
            if p.len() != self.dimension {
                return bad(format!(
                    "node {i} has {} coordinates, expected {}",
                    p.len(),
                    self.dimension
                ));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return bad(format!("node {i} has a non-finite coordinate"));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.a >= n || e.b >= n {
                return bad(format!("edge {i} ({}, {}) references a missing vertex", e.a, e.b));
            }
            if e.a == e.b {
                return bad(format!("edge {i} is a self-loop at {}", e.a));
            }
            if !(e.lambda >= 0.0) {
                return bad(format!("edge {i} has negative modulus {}", e.lambda));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return bad(format!("duplicate edge ({}, {})", e.a, e.b));
            }
        }
        for (j, s) in self.stars.iter().enumerate() {
            if s.center >= n {
                return bad(format!("star {j} center {} is missing", s.center));
            }
            if !(s.mu >= 0.0) {
                return bad(format!("star {j} has negative modulus {}", s.mu));
            }
            if s.leaves.len() < 2 {
                return bad(format!("star {j} has fewer than 2 leaves"));
            }
            let mut leaf_set = BTreeSet::new();
            for &l in &s.leaves {
                if l >= n {
                    return bad(format!("star {j} leaf {l} is missing"));
                }
                if l == s.center {
                    return bad(format!("star {j} lists its center as a leaf"));
                }
                if !leaf_set.insert(l) {
                    return bad(format!("star {j} repeats leaf {l}"));
                }
                if !seen.contains(&(l.min(s.center), l.max(s.center))) {
                    return bad(format!(
                        "star {j} leaf {l} is not adjacent to center {}",
                        s.center
                    ));
                }
            }
        }
        if self.primitive {
            let adj = self.adjacency();
            for (v, nb) in adj.iter().enumerate() {
                let owned: Vec<&Star> = self.stars.iter().filter(|s| s.center == v).collect();
                if nb.len() >= 2 {
                    let full = owned.iter().filter(|s| {
                        let mut l = s.leaves.clone();
                        l.sort_unstable();
                        &l == nb
                    });
                    if owned.len() != 1 || full.count() != 1 {
                        return bad(format!(
                            "primitive graph: vertex {v} must carry exactly one star over all neighbors"
                        ));
                    }
                } else if !owned.is_empty() {
                    return bad(format!("primitive graph: terminal vertex {v} carries a star"));
                }
            }
        }
        Ok(())
    }

    /// Structural barcode: counts of k-stars for k >= 3 and the node count.
    pub fn barcode(&self) -> Barcode {
        let mut counts: Vec<usize> = Vec::new();
        for s in &self.stars {
            let k = s.order();
            if k >= 3 {
                if counts.len() < k - 2 {
                    counts.resize(k - 2, 0);
                }
                counts[k - 3] += 1;
            }
        }
        Barcode {
            star_counts: counts,
            node_count: self.node_count(),
        }
    }

    /// Bounding-box diagonal of the node embedding.
    pub fn extent(&self) -> f64 {
        bounding_diagonal(self.nodes.iter().map(Vec::as_slice), self.dimension)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            dimension: self.dimension,
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|e| (e.a, e.b, e.lambda)).collect(),
            stars: self
                .stars
                .iter()
                .map(|s| StarDocument {
                    center: s.center,
                    leaves: s.leaves.clone(),
                    mu: s.mu,
                })
                .collect(),
            primitive: self.primitive,
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self> {
        let g = Self {
            dimension: doc.dimension,
            nodes: doc.nodes,
            edges: doc.edges.into_iter().map(|(a, b, l)| Edge::new(a, b, l)).collect(),
            stars: doc
                .stars
                .into_iter()
                .map(|s| Star {
                    center: s.center,
                    leaves: s.leaves,
                    mu: s.mu,
                })
                .collect(),
            primitive: doc.primitive,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

pub(crate) fn bounding_diagonal<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> f64 {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut any = false;
    for p in points {
        any = true;
        for (d, &x) in p.iter().enumerate() {
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    if !any {
        return 0.0;
    }
    lo.iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
}

/// On-disk JSON form of an [`ElasticGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub dimension: usize,
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize, f64)>,
    pub stars: Vec<StarDocument>,
    pub primitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarDocument {
    pub center: usize,
    pub leaves: Vec<usize>,
    pub mu: f64,
}

/// Structural complexity barcode, rendered as `N_k|...|N_4|N_3||N_nodes`.
///
/// `star_counts[0]` counts 3-stars, `star_counts[1]` 4-stars and so on. The
/// vector never ends in a zero; a graph without stars of order >= 3 renders
/// as `0||N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Barcode {
    pub star_counts: Vec<usize>,
    pub node_count: usize,
}

impl Barcode {
    pub fn total_stars(&self) -> usize {
        self.star_counts.iter().sum()
    }

    /// Count of k-stars (k >= 3).
    pub fn stars_of_order(&self, k: usize) -> usize {
        if k < 3 {
            return 0;
        }
        self.star_counts.get(k - 3).copied().unwrap_or(0)
    }

    /// The part left of `||`.
    pub fn star_part(&self) -> String {
        if self.star_counts.is_empty() {
            return "0".to_string();
        }
        self.star_counts
            .iter()
            .rev()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for Barcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}||{}", self.star_part(), self.node_count)
    }
}

impl FromStr for Barcode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Barcode(s.to_string());
        let (stars, nodes) = s.split_once("||").ok_or_else(err)?;
        let node_count: usize = nodes.trim().parse().map_err(|_| err())?;
        let mut star_counts = stars
            .split('|')
            .rev()
            .map(|c| c.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        while star_counts.last() == Some(&0) {
            star_counts.pop();
        }
        Ok(Self {
            star_counts,
            node_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> ElasticGraph {
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, 0.0]).collect();
        ElasticGraph::path(&pts, 1.0, 1.0)
    }

    fn star_graph(k: usize) -> ElasticGraph {
        let mut nodes = vec![vec![0.0, 0.0]];
        let mut edges = Vec::new();
        for i in 0..k {
            let a = i as f64 * std::f64::consts::TAU / k as f64;
            nodes.push(vec![a.cos(), a.sin()]);
            edges.push((0, i + 1));
        }
        ElasticGraph::from_edges(nodes, &edges, 1.0, 1.0)
    }

    #[test]
    fn minimal_primitive_path_validates() {
        let g = line(3);
        assert_eq!(g.stars.len(), 1);
        assert_eq!(g.stars[0].center, 1);
        g.validate().unwrap();
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let mut g = line(3);
        g.edges.push(Edge::new(2, 7, 1.0));
        let err = g.validate().unwrap_err().to_string();
        assert!(err.contains("missing vertex"), "{err}");
    }

    #[test]
    fn star_leaf_must_be_adjacent() {
        let mut g = line(4);
        g.primitive = false;
        g.stars.push(Star {
            center: 0,
            leaves: vec![1, 3],
            mu: 1.0,
        });
        let err = g.validate().unwrap_err().to_string();
        assert!(err.contains("not adjacent"), "{err}");
    }

    #[test]
    fn negative_modulus_is_rejected() {
        let mut g = line(2);
        g.edges[0].lambda = -0.5;
        assert!(g.validate().is_err());
    }

    #[test]
    fn primitive_flag_is_enforced() {
        let mut g = line(4);
        g.stars.pop();
        assert!(g.validate().is_err());
        g.primitive = false;
        g.validate().unwrap();
    }

    #[test]
    fn primitive_star_derivation() {
        assert_eq!(line(5).stars.len(), 3);
        assert!(line(5).stars.iter().all(|s| s.order() == 2));
        let s = star_graph(3);
        assert_eq!(s.stars.len(), 1);
        assert_eq!(s.stars[0].order(), 3);
        assert!(line(2).stars.is_empty());
    }

    #[test]
    fn derivation_is_idempotent() {
        let mut g = star_graph(4);
        let once = g.clone();
        g.derive_primitive_stars(1.0);
        assert_eq!(g, once);
    }

    #[test]
    fn barcode_rendering() {
        assert_eq!(star_graph(3).barcode().to_string(), "1||4");
        assert_eq!(line(5).barcode().to_string(), "0||5");
        assert_eq!(star_graph(4).barcode().to_string(), "1|0||5");
    }

    #[test]
    fn barcode_with_six_three_stars_and_two_four_stars() {
        let b = Barcode {
            star_counts: vec![6, 2],
            node_count: 15,
        };
        assert_eq!(b.to_string(), "2|6||15");
        assert_eq!("2|6||15".parse::<Barcode>().unwrap(), b);
    }

    #[test]
    fn barcode_parse_errors() {
        assert!("12".parse::<Barcode>().is_err());
        assert!("a||3".parse::<Barcode>().is_err());
        assert!("1||".parse::<Barcode>().is_err());
    }

    #[test]
    fn remove_vertex_renumbers() {
        let mut g = line(4);
        g.remove_vertex(0);
        g.derive_primitive_stars(1.0);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)]);
        g.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let g = star_graph(3);
        let back = ElasticGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        let text = g.to_json();
        assert!(text.contains("\"dimension\""));
        assert!(text.contains("\"primitive\""));
    }

    #[test]
    fn tree_detection() {
        assert!(line(6).is_tree());
        let mut g = line(4);
        g.edges.push(Edge::new(0, 3, 1.0));
        assert!(!g.is_tree());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_tree() -> impl Strategy<Value = ElasticGraph> {
            (2usize..30).prop_flat_map(|n| {
                proptest::collection::vec(any::<prop::sample::Index>(), n - 1).prop_map(move |parents| {
                    let nodes = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
                    let edges: Vec<(usize, usize)> = parents
                        .iter()
                        .enumerate()
                        .map(|(i, p)| (p.index(i + 1), i + 1))
                        .collect();
                    ElasticGraph::from_edges(nodes, &edges, 1.0, 1.0)
                })
            })
        }

        proptest! {
            #[test]
            fn tree_invariants(g in random_tree()) {
                prop_assert!(g.validate().is_ok());
                prop_assert!(g.is_tree());
                prop_assert_eq!(g.edges.len(), g.node_count() - 1);
                prop_assert_eq!(g.barcode().node_count, g.node_count());
                let mut again = g.clone();
                again.derive_primitive_stars(1.0);
                prop_assert_eq!(&again, &g);
            }

            #[test]
            fn barcode_round_trip(counts in proptest::collection::vec(0usize..9, 0..5), n in 1usize..500) {
                let mut counts = counts;
                while counts.last() == Some(&0) { counts.pop(); }
                let b = Barcode { star_counts: counts, node_count: n };
                prop_assert_eq!(b.to_string().parse::<Barcode>().unwrap(), b);
            }
        }
    }
}
