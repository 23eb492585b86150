mod common;

use proptest::prelude::*;

use common::{
    dataset, fd_gradient, fixed_partition_energy, flatten, harmonic_tree_embedding, nearest, nearest_node_energy,
    random_points, random_tree_edges, rng, unflatten,
};
use pgraph::optimizer::em_step;
use pgraph::{fit, ElasticGraph, FitConfig};

fn instance(seed: u64) -> (Vec<Vec<f64>>, ElasticGraph) {
    let mut r = rng(seed);
    let k = 2 + (seed % 6) as usize;
    let edges = random_tree_edges(&mut r, k);
    let nodes = harmonic_tree_embedding(&mut r, k, &edges, 2);
    let points = random_points(&mut r, 40, 2, 1.0);
    (points, ElasticGraph::from_edges(nodes, &edges, 0.05, 0.2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn em_step_never_raises_energy(seed in any::<u64>()) {
        let (points, mut g) = instance(seed);
        let data = dataset(&points);
        for _ in 0..5 {
            let next = em_step(&data, &g).unwrap();
            let before = nearest_node_energy(&points, &g, &g.nodes);
            let after = nearest_node_energy(&points, &next, &next.nodes);
            prop_assert!(after <= before * (1.0 + 1e-12) + 1e-15, "{before} -> {after}");
            g = next;
        }
    }

    #[test]
    fn em_step_solves_its_partition(seed in any::<u64>()) {
        let (points, g) = instance(seed);
        let data = dataset(&points);
        let assignment: Vec<usize> = points.iter().map(|x| nearest(&g.nodes, x)).collect();
        let next = em_step(&data, &g).unwrap();
        let f = |flat: &[f64]| fixed_partition_energy(&points, &assignment, &g, &unflatten(flat, 2));
        let grad = fd_gradient(f, &flatten(&next.nodes), 1e-6);
        prop_assert!(grad.amax() < 1e-7, "gradient {}", grad.amax());
    }

    #[test]
    fn fit_commutes_with_translation(seed in any::<u64>(), dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let (points, g) = instance(seed);
        let shift = |v: &[Vec<f64>]| -> Vec<Vec<f64>> { v.iter().map(|x| vec![x[0] + dx, x[1] + dy]).collect() };
        let config = FitConfig::default();
        let a = fit(&dataset(&points), &g, &config).unwrap();
        let mut moved = g.clone();
        moved.nodes = shift(&g.nodes);
        let b = fit(&dataset(&shift(&points)), &moved, &config).unwrap();
        for (p, q) in shift(&a.nodes).iter().zip(&b.nodes) {
            prop_assert!((p[0] - q[0]).abs() < 1e-8 && (p[1] - q[1]).abs() < 1e-8);
        }
    }
}
