//! Per-stage timings on a single worker versus every available core.
//! Without the `parallel` feature only the sequential column is measured.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lsi::{
    assemble_weight_matrix, euclidean_distance_matrix, fix_known_block, mst_knn_graph, par,
    power_iterate, DomainMatrix, ImputationConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SIZES: [usize; 2] = [512, 2048];
const DIM: usize = 64;
const DELTA: usize = 8;

fn domain(n: usize) -> DomainMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let x = Array2::from_shape_fn((n, DIM), |_| rng.sample::<f64, _>(StandardNormal));
    DomainMatrix::new((0..n).map(|i| format!("e{i}")).collect(), x).unwrap()
}

fn modes() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cfg!(feature = "parallel") {
        vec![("sequential", 1), ("parallel", all)]
    } else {
        vec![("sequential", 1)]
    }
}

fn stages(c: &mut Criterion) {
    for n in SIZES {
        let x = domain(n);
        let d = euclidean_distance_matrix(&x);
        let g = mst_knn_graph(&d, DELTA).unwrap();
        let w = fix_known_block(&assemble_weight_matrix(&g, &x).unwrap(), n / 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y_p = Array2::from_shape_fn((n / 2, DIM), |_| rng.sample::<f64, _>(StandardNormal));
        let cfg = ImputationConfig {
            eta: 1e-6,
            ..ImputationConfig::default()
        };

        let mut group = c.benchmark_group(format!("n={n}"));
        group.sample_size(10);
        for (mode, threads) in modes() {
            group.bench_function(BenchmarkId::new("distances", mode), |b| {
                par::with_threads(threads, || b.iter(|| black_box(euclidean_distance_matrix(&x)))).unwrap();
            });
            group.bench_function(BenchmarkId::new("graph", mode), |b| {
                par::with_threads(threads, || b.iter(|| black_box(mst_knn_graph(&d, DELTA).unwrap()))).unwrap();
            });
            group.bench_function(BenchmarkId::new("weights", mode), |b| {
                par::with_threads(threads, || b.iter(|| black_box(assemble_weight_matrix(&g, &x).unwrap()))).unwrap();
            });
            group.bench_function(BenchmarkId::new("iterate", mode), |b| {
                par::with_threads(threads, || b.iter(|| black_box(power_iterate(&w, y_p.view(), &cfg).unwrap()))).unwrap();
            });
        }
        group.finish();
    }
}

criterion_group!(benches, stages);
criterion_main!(benches);
