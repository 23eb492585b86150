//! Elastic cubic complexes: Cartesian products of elastic graphs.
//!
//! Product vertices are tuples `(v_1, ..., v_r)` with `v_i` a vertex of factor `i`,
//! numbered in mixed radix with the last factor varying fastest. Every edge and
//! star of factor `i` is copied once for each choice of the other coordinates.

use crate::energy::{bending_energy, stretching_energy};
use crate::error::{Error, Result};
use crate::graph::{Edge, ElasticGraph, Star};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicComplex {
    pub factors: Vec<ElasticGraph>,
    pub product: ElasticGraph,
}

/// Assigns an embedding to a product vertex given its coordinate tuple.
pub type ProductInitializer = fn(&[ElasticGraph], &[usize]) -> Vec<f64>;

impl CubicComplex {
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(ElasticGraph::node_count).collect()
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        flat_index(&self.shape(), tuple)
    }

    pub fn tuple_of(&self, index: usize) -> Vec<usize> {
        tuple_of(&self.shape(), index)
    }

    /// Number of copies of factor `i` inside the product.
    pub fn copies_of(&self, i: usize) -> usize {
        self.shape()
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, n)| n)
            .product()
    }

    /// Factor `i` with its embedding replaced by the product embedding of the copy
    /// that fixes the other coordinates to `anchor` (the entry at `i` is ignored).
    pub fn copy_of(&self, i: usize, anchor: &[usize]) -> ElasticGraph {
        let shape = self.shape();
        let mut tuple = anchor.to_vec();
        let mut copy = self.factors[i].clone();
        copy.dimension = self.product.dimension;
        for (v, node) in copy.nodes.iter_mut().enumerate() {
            tuple[i] = v;
            *node = self.product.nodes[flat_index(&shape, &tuple)].clone();
        }
        copy
    }
}

fn flat_index(shape: &[usize], tuple: &[usize]) -> usize {
    shape.iter().zip(tuple).fold(0, |acc, (n, v)| acc * n + v)
}

fn tuple_of(shape: &[usize], mut index: usize) -> Vec<usize> {
    let mut tuple = vec![0; shape.len()];
    for (slot, n) in tuple.iter_mut().zip(shape).rev() {
        *slot = index % n;
        index /= n;
    }
    tuple
}

fn centroid(g: &ElasticGraph) -> Vec<f64> {
    let mut mean = vec![0.0; g.dimension];
    for x in &g.nodes {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= g.node_count() as f64);
    mean
}

/// Sum of the centered factor embeddings, shifted to the average factor centroid.
/// Orthogonal segments give a regular grid.
pub fn sum_of_factors(factors: &[ElasticGraph], tuple: &[usize]) -> Vec<f64> {
    let dim = factors[0].dimension;
    let r = factors.len() as f64;
    let mut x = vec![0.0; dim];
    for (f, &v) in factors.iter().zip(tuple) {
        let c = centroid(f);
        for d in 0..dim {
            x[d] += f.nodes[v][d] - c[d] + c[d] / r;
        }
    }
    x
}

pub fn cartesian_product(factors: &[ElasticGraph]) -> Result<CubicComplex> {
    cartesian_product_with(factors, sum_of_factors)
}

pub fn cartesian_product_with(factors: &[ElasticGraph], init: ProductInitializer) -> Result<CubicComplex> {
    let Some(first) = factors.first() else {
        return Err(Error::Precondition("cartesian product needs at least one factor".into()));
    };
    for f in factors {
        f.validate()?;
        if f.node_count() == 0 {
            return Err(Error::InvalidGraph("factor has no vertices".into()));
        }
        if f.dimension != first.dimension {
            return Err(Error::DimensionMismatch {
                data: first.dimension,
                graph: f.dimension,
            });
        }
    }
    let shape: Vec<usize> = factors.iter().map(ElasticGraph::node_count).collect();
    let total: usize = shape.iter().product();

    let mut product = ElasticGraph::new(first.dimension);
    product.primitive = false;
    for index in 0..total {
        product.add_node(init(factors, &tuple_of(&shape, index)));
    }
    for (i, f) in factors.iter().enumerate() {
        for index in 0..total {
            let mut tuple = tuple_of(&shape, index);
            if tuple[i] != 0 {
                continue;
            }
            let mut at = |v: usize| {
                tuple[i] = v;
                flat_index(&shape, &tuple)
            };
            for e in &f.edges {
                let (a, b) = (at(e.a), at(e.b));
                product.edges.push(Edge::new(a, b, e.lambda));
            }
            for s in &f.stars {
                let center = at(s.center);
                let leaves = s.leaves.iter().map(|&l| at(l)).collect();
                product.stars.push(Star { center, leaves, mu: s.mu });
            }
        }
    }
    Ok(CubicComplex {
        factors: factors.to_vec(),
        product,
    })
}

/// Elastic energy of the product, checked against the sum over all factor copies.
pub fn product_energy_check(complex: &CubicComplex) -> Result<f64> {
    let product = &complex.product;
    if product.node_count() != complex.shape().iter().product::<usize>() {
        return Err(Error::InvalidGraph("product has no embedding for every vertex tuple".into()));
    }
    let direct = stretching_energy(product) + bending_energy(product);

    let shape = complex.shape();
    let mut per_copy = 0.0;
    for i in 0..complex.factors.len() {
        for index in 0..product.node_count() {
            let anchor = tuple_of(&shape, index);
            if anchor[i] != 0 {
                continue;
            }
            let copy = complex.copy_of(i, &anchor);
            per_copy += stretching_energy(&copy) + bending_energy(&copy);
        }
    }
    let scale = direct.abs().max(per_copy.abs());
    if (direct - per_copy).abs() > 1e-12 * scale {
        return Err(Error::EnergyMismatch { direct, per_copy });
    }
    Ok(direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::is_pluriharmonic;

    fn segment(n: usize, dir: [f64; 2]) -> ElasticGraph {
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * dir[0], i as f64 * dir[1]]).collect();
        ElasticGraph::path(&pts, 1.0, 1.0)
    }

    fn ribs(g: &ElasticGraph) -> usize {
        g.stars.iter().filter(|s| s.order() == 2).count()
    }

    #[test]
    fn path_products_count() {
        let c = cartesian_product(&[segment(2, [1.0, 0.0]), segment(3, [0.0, 1.0])]).unwrap();
        assert_eq!((c.product.node_count(), c.product.edges.len(), ribs(&c.product)), (6, 7, 2));
        let c = cartesian_product(&[segment(3, [1.0, 0.0]), segment(3, [0.0, 1.0])]).unwrap();
        assert_eq!((c.product.node_count(), c.product.edges.len(), ribs(&c.product)), (9, 12, 6));
        assert_eq!(c.copies_of(0), 3);
        c.product.validate().unwrap();
    }

    #[test]
    fn single_factor_is_identity() {
        let f = segment(4, [1.0, 2.0]);
        let c = cartesian_product(std::slice::from_ref(&f)).unwrap();
        assert_eq!(c.product.nodes, f.nodes);
        assert_eq!(c.product.edges, f.edges);
        assert_eq!(c.product.stars, f.stars);
    }

    #[test]
    fn empty_factor_list_is_an_error() {
        assert!(cartesian_product(&[]).is_err());
    }

    #[test]
    fn unit_square_stretching() {
        let c = cartesian_product(&[segment(2, [1.0, 0.0]), segment(2, [0.0, 1.0])]).unwrap();
        assert_eq!(stretching_energy(&c.product), 4.0);
        assert_eq!(product_energy_check(&c).unwrap(), 4.0);
    }

    #[test]
    fn grid_is_pluriharmonic() {
        let c = cartesian_product(&[segment(4, [1.0, 0.0]), segment(3, [0.0, 1.0])]).unwrap();
        assert_eq!(bending_energy(&c.product), 0.0);
        assert!(is_pluriharmonic(&c.product, 1e-12));
    }

    #[test]
    fn tuple_indexing_round_trips() {
        let c = cartesian_product(&[segment(2, [1.0, 0.0]), segment(3, [0.0, 1.0]), segment(4, [1.0, 1.0])]).unwrap();
        for index in 0..c.product.node_count() {
            assert_eq!(c.index_of(&c.tuple_of(index)), index);
        }
        assert_eq!(c.tuple_of(5), vec![0, 1, 1]);
    }

    #[test]
    fn sum_initializer_translates_to_common_mean() {
        let a = segment(2, [1.0, 0.0]);
        let mut b = segment(3, [0.0, 1.0]);
        b.nodes.iter_mut().for_each(|x| x[0] += 10.0);
        let c = cartesian_product(&[a.clone(), b.clone()]).unwrap();
        let mean = centroid(&c.product);
        let want: Vec<f64> = (0..2).map(|d| 0.5 * (centroid(&a)[d] + centroid(&b)[d])).collect();
        assert!(mean.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}
