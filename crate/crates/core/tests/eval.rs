mod common;

use lsi::eval::{format_accuracy, sample_synthetic, sweep_tsv};
use lsi::pipeline::{impute_block, PipelineOptions};
use lsi::{
    knn_accuracy, run_synthetic_transfer, sensitivity_sweep, ImputationConfig, LabeledEmbeddings,
    SweepParameter, SyntheticTransferSpec,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Leave-one-out k-NN by brute force: sort every other point by
/// (distance, index), majority vote, ties to the label whose nearest voter
/// is closest.
fn naive_knn(v: &Array2<f64>, labels: &[usize], k: usize, subset: &[usize]) -> f64 {
    let m = v.nrows();
    let mut correct = 0;
    for &i in subset {
        let mut others: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = v.row(i).iter().zip(v.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                (d.sqrt(), j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let top = &others[..k];
        let mut best: Option<(usize, usize, usize)> = None; // (votes, first rank, label)
        for (rank, &(_, j)) in top.iter().enumerate() {
            let l = labels[j];
            let votes = top.iter().filter(|&&(_, o)| labels[o] == l).count();
            let first = top.iter().position(|&(_, o)| labels[o] == l).unwrap();
            let _ = rank;
            let cand = (votes, first, l);
            best = Some(match best {
                None => cand,
                Some(b) if votes > b.0 || (votes == b.0 && (first, l) < (b.1, b.2)) => cand,
                Some(b) => b,
            });
        }
        if best.unwrap().2 == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / subset.len() as f64
}

fn labeled(m: usize, d: usize, n_labels: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = common::rng(seed);
    let v = Array2::from_shape_fn((m, d), |_| r.sample::<f64, _>(StandardNormal));
    let labels = (0..m).map(|_| r.random_range(0..n_labels)).collect();
    (v, labels)
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|l| format!("l{l}")).collect()
}

#[test]
fn knn_matches_brute_force() {
    for seed in 0..20 {
        let (v, labels) = labeled(30, 4, 3, seed);
        let subset: Vec<usize> = (0..30).collect();
        let data = LabeledEmbeddings::new(v.clone(), labels.clone(), names(3)).unwrap();
        for k in [1, 2, 5, 8] {
            let got = knn_accuracy(&data, k, &subset).unwrap();
            assert_eq!(got, naive_knn(&v, &labels, k, &subset), "seed {seed} k {k}");
        }
    }
}

#[test]
fn knn_is_invariant_under_relabeling_rows() {
    let (v, labels) = labeled(30, 3, 4, 9);
    let subset: Vec<usize> = (0..30).step_by(2).collect();
    let base = knn_accuracy(&LabeledEmbeddings::new(v.clone(), labels.clone(), names(4)).unwrap(), 5, &subset).unwrap();
    let mut perm: Vec<usize> = (0..30).collect();
    perm.shuffle(&mut common::rng(10));
    let mut inv = vec![0; 30];
    for (k, &i) in perm.iter().enumerate() {
        inv[i] = k;
    }
    let pv = v.select(ndarray::Axis(0), &perm);
    let pl: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
    let psub: Vec<usize> = subset.iter().map(|&i| inv[i]).collect();
    let got = knn_accuracy(&LabeledEmbeddings::new(pv, pl, names(4)).unwrap(), 5, &psub).unwrap();
    assert_eq!(got, base);
}

#[test]
fn one_nn_on_separated_pairs_is_perfect() {
    let mut v = Array2::zeros((6, 2));
    for i in 0..6 {
        v[[i, 0]] = (i / 2) as f64 * 100.0;
        v[[i, 1]] = (i % 2) as f64;
    }
    let labels = vec![0, 0, 1, 1, 2, 2];
    let data = LabeledEmbeddings::new(v, labels, names(3)).unwrap();
    assert_eq!(knn_accuracy(&data, 1, &[0, 1, 2, 3, 4, 5]).unwrap(), 1.0);
    assert_eq!(format_accuracy(1.0), "1.000");
}

#[test]
fn knn_rejects_bad_arguments() {
    let (v, labels) = labeled(5, 2, 2, 0);
    let data = LabeledEmbeddings::new(v, labels, names(2)).unwrap();
    assert!(knn_accuracy(&data, 0, &[0]).is_err());
    assert!(knn_accuracy(&data, 5, &[0]).is_err());
    assert!(knn_accuracy(&data, 2, &[]).is_err());
    assert!(knn_accuracy(&data, 2, &[7]).is_err());
}

#[test]
fn synthetic_sampling_is_deterministic() {
    let spec = SyntheticTransferSpec { n: 50, p: 30, ..SyntheticTransferSpec::default() };
    let a = sample_synthetic(&spec).unwrap();
    let b = sample_synthetic(&spec).unwrap();
    assert_eq!(a.domain, b.domain);
    assert_eq!(a.semantic, b.semantic);
    assert_eq!(a.labels, b.labels);
    let c = sample_synthetic(&SyntheticTransferSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(a.semantic, c.semantic);
}

#[test]
fn noiseless_transfer_tracks_ground_truth() {
    let cfg = ImputationConfig::default();
    let (mut imputed, mut truth, mut random) = (0.0, 0.0, 0.0);
    for seed in 0..10 {
        let spec = SyntheticTransferSpec { seed, ..SyntheticTransferSpec::default() };
        let r = run_synthetic_transfer(&spec, &cfg, 8).unwrap();
        assert!(r.converged);
        imputed += r.imputed_accuracy / 10.0;
        truth += r.truth_accuracy / 10.0;
        random += r.random_accuracy / 10.0;
    }
    assert!(imputed >= truth - 0.05, "imputed {imputed} truth {truth}");
    assert!(imputed >= 2.0 * random, "imputed {imputed} random {random}");
}

#[test]
fn random_baseline_is_near_chance() {
    let cfg = ImputationConfig::default();
    let mean: f64 = (0..10)
        .map(|seed| {
            let spec = SyntheticTransferSpec { seed, ..SyntheticTransferSpec::default() };
            run_synthetic_transfer(&spec, &cfg, 8).unwrap().random_accuracy
        })
        .sum::<f64>()
        / 10.0;
    // Five labels of unequal size; chance sits well below one half.
    assert!(mean < 0.45, "mean random accuracy {mean}");
}

#[test]
fn noise_degrades_imputed_accuracy() {
    let cfg = ImputationConfig::default();
    let mean_at = |sigma: f64| -> f64 {
        (0..10)
            .map(|seed| {
                let spec = SyntheticTransferSpec {
                    seed,
                    noise_sigma: sigma,
                    ..SyntheticTransferSpec::default()
                };
                run_synthetic_transfer(&spec, &cfg, 8).unwrap().imputed_accuracy
            })
            .sum::<f64>()
            / 10.0
    };
    let accs: Vec<f64> = [0.0, 0.5, 2.0].into_iter().map(mean_at).collect();
    eprintln!("accuracy by noise: {accs:?}");
    assert!(accs.windows(2).all(|w| w[1] <= w[0]), "{accs:?}");
}

#[test]
fn single_value_sweep_equals_direct_run() {
    let spec = SyntheticTransferSpec { n: 120, p: 80, ..SyntheticTransferSpec::default() };
    let cfg = ImputationConfig::default();
    let direct = run_synthetic_transfer(&spec, &cfg, 6).unwrap();
    let rows = sensitivity_sweep(SweepParameter::Delta, &[6.0], &spec, &cfg, 8).unwrap();
    assert_eq!(rows[0].accuracy, direct.imputed_accuracy);
    let rows = sensitivity_sweep(SweepParameter::Eta, &[cfg.eta], &spec, &cfg, 6).unwrap();
    assert_eq!(rows[0].accuracy, direct.imputed_accuracy);
    assert!(sweep_tsv(SweepParameter::Eta, &rows).starts_with("eta\taccuracy\n"));
}

#[test]
fn sweep_rejects_non_integer_delta() {
    let spec = SyntheticTransferSpec { n: 60, p: 40, ..SyntheticTransferSpec::default() };
    assert!(sensitivity_sweep(SweepParameter::Delta, &[2.5], &spec, &ImputationConfig::default(), 8).is_err());
    assert!("gamma".parse::<SweepParameter>().is_err());
}

#[test]
fn accuracy_is_insensitive_to_delta_and_eta() {
    let cfg = ImputationConfig::default();
    let spread = |param: SweepParameter, values: &[f64]| -> f64 {
        let mut means = vec![0.0; values.len()];
        for seed in 0..10 {
            let spec = SyntheticTransferSpec { seed, ..SyntheticTransferSpec::default() };
            let rows = sensitivity_sweep(param, values, &spec, &cfg, 8).unwrap();
            for (m, r) in means.iter_mut().zip(rows) {
                *m += r.accuracy / 10.0;
            }
        }
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    assert!(spread(SweepParameter::Delta, &[4.0, 8.0, 16.0]) < 0.1);
    assert!(spread(SweepParameter::Eta, &[1e-1, 1e-2, 1e-3]) < 0.05);
}

#[test]
fn single_hidden_entity_matches_closed_form() {
    let spec = SyntheticTransferSpec { n: 150, p: 149, ..SyntheticTransferSpec::default() };
    let data = sample_synthetic(&spec).unwrap();
    let y_p = data.semantic.slice(ndarray::s![..149, ..]);
    let opts = PipelineOptions {
        delta: 8,
        imputation: ImputationConfig { eta: 1e-12, max_iter: 100_000, ..ImputationConfig::default() },
    };
    let block = impute_block(&data.domain, y_p, &opts, |_, _| {}).unwrap();
    let w = lsi::fix_known_block(block.weights.as_ref().unwrap(), 149).unwrap();
    let exact = lsi::closed_form_solve(&w, y_p).unwrap();
    let err = block.result.imputed().iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    // With no noise the hidden vector is a convex combination of anchors
    // that reconstructs its domain row; it stays near the truth.
    let truth = data.semantic.row(149);
    let scale = truth.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let gap = block.result.imputed().row(0).iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 0.5 * scale, "gap {gap} vs scale {scale}");
}
