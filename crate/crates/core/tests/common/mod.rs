#![allow(dead_code)]

use lsi::{
    assemble_weight_matrix, euclidean_distance_matrix, mst_knn_graph, DomainMatrix, WeightMatrix,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_domain(n: usize, d: usize, seed: u64) -> DomainMatrix {
    let mut r = rng(seed);
    let x = Array2::from_shape_fn((n, d), |_| r.sample::<f64, _>(StandardNormal));
    DomainMatrix::new((0..n).map(|i| format!("e{i}")).collect(), x).unwrap()
}

pub struct System {
    pub x: DomainMatrix,
    pub w: WeightMatrix,
    pub y_p: Array2<f64>,
    pub p: usize,
}

/// Random MST-k-NN system: Gaussian domain rows, Gaussian anchor vectors.
pub fn random_system(n: usize, p: usize, d: usize, s: usize, delta: usize, seed: u64) -> System {
    let x = random_domain(n, d, seed);
    let g = mst_knn_graph(&euclidean_distance_matrix(&x), delta).unwrap();
    let w = assemble_weight_matrix(&g, &x).unwrap();
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let y_p = Array2::from_shape_fn((p, s), |_| r.sample::<f64, _>(StandardNormal));
    System { x, w, y_p, p }
}

pub fn rel_frobenius(a: ndarray::ArrayView2<f64>, b: ndarray::ArrayView2<f64>) -> f64 {
    let diff = (&a - &b).mapv(|v| v * v).sum().sqrt();
    let base = b.mapv(|v| v * v).sum().sqrt();
    diff / base
}

pub fn random_unit_interval(r: &mut ChaCha8Rng) -> f64 {
    r.random::<f64>()
}
