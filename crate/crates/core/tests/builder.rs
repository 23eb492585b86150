mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use common::{dataset, elastic_energy, lloyd, nearest, rng};
use pgraph::builder::{grow_from, trace_to_records};
use pgraph::dataset::generate_labeled;
use pgraph::report::{read_trace_csv, write_trace_csv};
use pgraph::{
    generate, grow, initialize, BuilderConfig, DataSet, ElasticGraph, FitConfig, GeneratorSpec, Grammar, RuleKind, Shape,
};

fn collinear(n: usize) -> DataSet {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64, 0.5 * i as f64 / (n - 1) as f64]).collect();
    dataset(&rows)
}

#[test]
fn collinear_data_grows_a_straight_path() {
    // Sampling error bends the optimum slightly; it fades as the line fills in.
    let data = collinear(100_000);
    let config = BuilderConfig {
        grammar_sequence: vec![Grammar::tree()],
        cc_max: 8,
        fve_stop: None,
        fit: FitConfig { convergence_tol: 1e-10, max_iterations: 10_000, ..FitConfig::default() },
        ..BuilderConfig::default()
    };
    let trace = grow(&data, &config).unwrap();
    let last = trace.records.last().unwrap();
    assert_eq!(last.barcode.to_string(), "0||10");
    let diameter_sq = 1.25;
    assert!(last.gc < 1e-8 * diameter_sq, "gc {}", last.gc);
}

#[test]
fn star_data_branches_along_generator_labels() {
    let spec = GeneratorSpec::new(Shape::Star, 300, 0.05, 42);
    let (data, labels) = generate_labeled(&spec).unwrap();
    let trace = grow(&data, &BuilderConfig { cc_max: 30, ..BuilderConfig::default() }).unwrap();
    let record = trace
        .records
        .iter()
        .find(|r| r.barcode.stars_of_order(3) == 1 && r.barcode.total_stars() == 1)
        .expect("a 3-star appears");
    assert!(record.node_count <= 30 + 2);

    // Cut the graph at the branching vertex and label each arm by its data.
    let g = &record.graph;
    let center = (0..g.node_count()).find(|&v| g.degree(v) == 3).unwrap();
    let mut arm = vec![usize::MAX; g.node_count()];
    for (a, &start) in g.neighbors(center).iter().enumerate() {
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if arm[v] != usize::MAX || v == center {
                continue;
            }
            arm[v] = a;
            stack.extend(g.neighbors(v));
        }
    }
    let mut votes = [[0usize; 3]; 3];
    for (x, &label) in data.points().zip(&labels) {
        let v = nearest(&g.nodes, x);
        if v != center {
            votes[arm[v]][label] += 1;
        }
    }
    let mut seen = Vec::new();
    for row in votes {
        let total: usize = row.iter().sum();
        let (best, count) = row.iter().enumerate().max_by_key(|&(_, c)| *c).unwrap();
        assert!(*count as f64 >= 0.9 * total as f64, "arm purity {row:?}");
        seen.push(best);
    }
    seen.sort_unstable();
    assert_eq!(seen, vec![0, 1, 2]);
}

/// Two 3-stars joined by a short bridge, sitting on data shaped like a single X.
#[test]
fn shrink_merges_split_branching() {
    let mut r = rng(11);
    let dirs = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let mut rows = Vec::new();
    for _ in 0..400 {
        let d = dirs[r.random_range(0..4)];
        let t: f64 = r.random();
        let nx: f64 = r.sample(StandardNormal);
        let ny: f64 = r.sample(StandardNormal);
        rows.push(vec![t * d[0] + 0.02 * nx, t * d[1] + 0.02 * ny]);
    }
    let data = dataset(&rows);
    let nodes = vec![
        vec![-0.15, 0.0],
        vec![0.15, 0.0],
        vec![-0.5, 0.5],
        vec![-1.0, 1.0],
        vec![-0.5, -0.5],
        vec![-1.0, -1.0],
        vec![0.5, 0.5],
        vec![1.0, 1.0],
        vec![0.5, -0.5],
        vec![1.0, -1.0],
    ];
    let edges = [(0, 1), (0, 2), (2, 3), (0, 4), (4, 5), (1, 6), (6, 7), (1, 8), (8, 9)];
    let start = ElasticGraph::from_edges(nodes, &edges, 0.01, 0.1);
    assert_eq!(start.barcode().to_string(), "2||10");
    let config = BuilderConfig {
        grammar_sequence: vec![Grammar::shrink()],
        cc_max: 1,
        fve_stop: None,
        ..BuilderConfig::default()
    };
    let trace = grow_from(&data, start, &config).unwrap();
    let step = &trace.records[1];
    assert_eq!(step.operation.unwrap().kind, RuleKind::RemoveEdge);
    assert_eq!(step.barcode.to_string(), "1|0||9");
}

#[test]
fn curve_grammar_yields_a_path() {
    let data = generate(&GeneratorSpec::new(Shape::Star, 200, 0.05, 3)).unwrap();
    let config = BuilderConfig {
        grammar_sequence: vec![Grammar::curve()],
        cc_max: 15,
        ..BuilderConfig::default()
    };
    let trace = grow(&data, &config).unwrap();
    for record in &trace.records {
        let g = &record.graph;
        assert!(g.is_tree());
        assert!((0..g.node_count()).all(|v| g.degree(v) <= 2));
    }
}

#[test]
fn initial_segment_follows_dominant_eigenvector() {
    let mut r = rng(5);
    let axes = [[3.0, 1.0, 0.5], [-0.4, 1.2, 0.3], [0.2, -0.1, 0.4]];
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let z: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
            (0..3).map(|d| (0..3).map(|k| z[k] * axes[k][d]).sum()).collect()
        })
        .collect();
    let data = dataset(&rows);
    let g = initialize(&data).unwrap();

    let mean = data.mean();
    let mut cov = DMatrix::<f64>::zeros(3, 3);
    for x in &rows {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]) / rows.len() as f64;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let seg: Vec<f64> = (0..3).map(|d| g.nodes[1][d] - g.nodes[0][d]).collect();
    let norm = seg.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine: f64 = (0..3).map(|d| seg[d] * v[d]).sum::<f64>() / norm;
    assert!(cosine.abs() > 0.999, "cosine {cosine}");
}

#[test]
fn points_grammar_places_centroids_at_cell_means() {
    let data = generate(&GeneratorSpec::new(Shape::Treelike, 150, 0.05, 9)).unwrap();
    let mut config = BuilderConfig::with_grammars(&["points"]).unwrap();
    config.fit = FitConfig { lambda: 0.0, mu: 0.0, ..FitConfig::default() };
    config.cc_max = 4;
    config.fve_stop = None;
    let trace = grow(&data, &config).unwrap();
    let rows = data.rows();
    for (k, record) in trace.records.iter().enumerate() {
        let g = &record.graph;
        assert_eq!(g.node_count(), k + 1);
        assert!(g.edges.is_empty());
        let (assignment, centroids) = lloyd(&rows, &g.nodes, 1);
        let again: Vec<usize> = rows.iter().map(|x| nearest(&centroids, x)).collect();
        if k > 0 {
            assert_eq!(assignment, again, "step {k} is not a Lloyd fixed point");
            for (a, b) in g.nodes.iter().zip(&centroids) {
                assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9));
            }
        }
    }
}

#[test]
fn gc_matches_recomputation_from_stored_graphs() {
    let data = generate(&GeneratorSpec::new(Shape::Treelike, 300, 0.04, 1)).unwrap();
    let trace = grow(&data, &BuilderConfig { cc_max: 20, ..BuilderConfig::default() }).unwrap();
    for r in &trace.records {
        let mut unit = r.graph.clone();
        unit.edges.iter_mut().for_each(|e| e.lambda = 0.0);
        unit.stars.iter_mut().for_each(|s| s.mu = 1.0);
        let n = unit.node_count() as f64;
        let want = n * n * elastic_energy(&unit, &unit.nodes);
        assert!((r.gc - want).abs() <= 1e-12 * want.max(1e-300), "step {}: {} vs {want}", r.step, r.gc);
    }
}

#[test]
fn trace_invariants_hold() {
    let data = generate(&GeneratorSpec::new(Shape::Treelike, 300, 0.04, 2)).unwrap();
    let trace = grow(&data, &BuilderConfig { cc_max: 25, ..BuilderConfig::default() }).unwrap();
    assert!(trace.records.len() <= 26);
    assert_eq!(trace.records[0].op_kind(), "init");
    for pair in trace.records.windows(2) {
        assert_eq!(pair[0].node_count.abs_diff(pair[1].node_count), 1);
    }
    for r in &trace.records {
        assert_eq!(r.barcode.node_count, r.graph.node_count());
        assert_eq!(r.barcode, r.graph.barcode());
    }
}

#[test]
fn trace_rows_round_trip_through_csv() {
    let data = generate(&GeneratorSpec::new(Shape::Star, 200, 0.05, 4)).unwrap();
    let trace = grow(&data, &BuilderConfig { cc_max: 8, ..BuilderConfig::default() }).unwrap();
    let rows = trace_to_records(&trace);
    assert_eq!(rows.len(), trace.records.len());
    let mut buf = Vec::new();
    write_trace_csv(&rows, &mut buf).unwrap();
    assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), rows);
}

#[test]
fn growth_is_deterministic() {
    let data = generate(&GeneratorSpec::new(Shape::Treelike, 200, 0.05, 8)).unwrap();
    let config = BuilderConfig { cc_max: 12, ..BuilderConfig::default() };
    let a = grow(&data, &config).unwrap();
    let b = grow(&data, &config).unwrap();
    assert_eq!(a, b);
}

