//! k-NN categorization accuracy and synthetic transfer experiments.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::engine::ImputationConfig;
use crate::error::{LsiError, Result};
use crate::geometry::{euclidean, DomainMatrix};
use crate::io::EmbeddingTable;
use crate::par;
use crate::pipeline::{impute_block, PipelineOptions};

/// Vectors with categorical labels; `labels[i]` indexes `label_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    pub vectors: Array2<f64>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

impl LabeledEmbeddings {
    pub fn new(vectors: Array2<f64>, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if vectors.nrows() != labels.len() {
            return Err(LsiError::invalid(format!(
                "{} vectors but {} labels",
                vectors.nrows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(LsiError::IndexOutOfRange {
                index: l,
                len: label_names.len(),
            });
        }
        Ok(Self {
            vectors,
            labels,
            label_names,
        })
    }

    /// Joins a table with `(entity, label)` pairs. Label indices follow first
    /// appearance. Returns the dataset and the entities without a vector.
    pub fn from_table(table: &EmbeddingTable, pairs: &[(String, String)]) -> Result<(Self, Vec<String>)> {
        let mut names: Vec<String> = Vec::new();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        let mut skipped = Vec::new();
        for (entity, label) in pairs {
            let Some(v) = table.get(entity) else {
                skipped.push(entity.clone());
                continue;
            };
            let idx = match names.iter().position(|n| n == label) {
                Some(i) => i,
                None => {
                    names.push(label.clone());
                    names.len() - 1
                }
            };
            labels.push(idx);
            rows.extend_from_slice(v);
        }
        let vectors = Array2::from_shape_vec((labels.len(), table.dim()), rows)
            .map_err(|e| LsiError::invalid(e.to_string()))?;
        Ok((Self::new(vectors, labels, names)?, skipped))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Leave-one-out k-NN accuracy over `subset`.
///
/// Each queried point is classified by majority vote of its `k` nearest
/// other points in the full set, neighbors ranked by `(distance, index)`.
/// Tied votes go to the label with the closest member among the neighbors,
/// then to the smaller label index.
pub fn knn_accuracy(data: &LabeledEmbeddings, k: usize, subset: &[usize]) -> Result<f64> {
    let m = data.len();
    if k == 0 {
        return Err(LsiError::invalid("k must be at least 1"));
    }
    if k >= m {
        return Err(LsiError::invalid(format!("k = {k} needs more than {m} points")));
    }
    if subset.is_empty() {
        return Err(LsiError::invalid("empty evaluation subset"));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= m) {
        return Err(LsiError::IndexOutOfRange { index: i, len: m });
    }
    let n_labels = data.label_names.len();
    let hits = par::map_range(subset.len(), |s| {
        let i = subset[s];
        let xi = data.vectors.row(i);
        let mut nbrs: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| (euclidean(xi, data.vectors.row(j)), j))
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        nbrs.select_nth_unstable_by(k - 1, by_rank);
        nbrs.truncate(k);

        let mut votes = vec![0usize; n_labels];
        let mut closest = vec![f64::INFINITY; n_labels];
        for &(dist, j) in &nbrs {
            let l = data.labels[j];
            votes[l] += 1;
            closest[l] = closest[l].min(dist);
        }
        let top = votes.iter().copied().max().unwrap_or(0);
        let predicted = (0..n_labels)
            .filter(|&l| votes[l] == top)
            .min_by(|&a, &b| closest[a].total_cmp(&closest[b]).then(a.cmp(&b)))
            .expect("k >= 1 casts at least one vote");
        usize::from(predicted == data.labels[i])
    });
    Ok(hits.iter().sum::<usize>() as f64 / subset.len() as f64)
}

/// Accuracy rendered the way reports print it.
pub fn format_accuracy(acc: f64) -> String {
    format!("{acc:.3}")
}

/// Parameters of a two-space transfer experiment with a known answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTransferSpec {
    pub n: usize,
    /// Entities whose semantic vectors stay visible; the last `n − p` are hidden.
    pub p: usize,
    pub manifold_dim: usize,
    pub affinity_dim: usize,
    pub semantic_dim: usize,
    pub noise_sigma: f64,
    pub n_labels: usize,
    pub seed: u64,
    /// Neighbors used for the k-NN accuracy.
    pub knn_k: usize,
}

impl Default for SyntheticTransferSpec {
    fn default() -> Self {
        Self {
            n: 300,
            p: 200,
            manifold_dim: 3,
            affinity_dim: 8,
            semantic_dim: 16,
            noise_sigma: 0.0,
            n_labels: 5,
            seed: 0,
            knn_k: 5,
        }
    }
}

impl SyntheticTransferSpec {
    pub fn validate(&self) -> Result<()> {
        if self.manifold_dim == 0 || self.manifold_dim > self.affinity_dim.min(self.semantic_dim) {
            return Err(LsiError::invalid(format!(
                "manifold_dim must lie in 1..=min(affinity_dim, semantic_dim), got {}",
                self.manifold_dim
            )));
        }
        if self.p == 0 || self.p >= self.n {
            return Err(LsiError::invalid(format!("need 1 <= p < n, got p={} n={}", self.p, self.n)));
        }
        if self.n_labels == 0 {
            return Err(LsiError::invalid("n_labels must be at least 1"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(LsiError::invalid("noise_sigma must be non-negative"));
        }
        if self.knn_k == 0 || self.knn_k >= self.n {
            return Err(LsiError::invalid(format!("knn_k must lie in 1..n, got {}", self.knn_k)));
        }
        Ok(())
    }
}

/// A sampled instance: both views of the same latent points.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub domain: DomainMatrix,
    /// Ground-truth semantic vectors for all `n` entities.
    pub semantic: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Latent points uniform in `[-1, 1]^manifold_dim`, mapped by independent
/// Gaussian linear maps into both spaces with additive noise. Labels are
/// the Voronoi cells of `n_labels` random latent centers.
pub fn sample_synthetic(spec: &SyntheticTransferSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m) = (spec.n, spec.manifold_dim);
    let latent = Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0));
    let to_affinity = Array2::from_shape_fn((m, spec.affinity_dim), |_| rng.sample::<f64, _>(StandardNormal));
    let to_semantic = Array2::from_shape_fn((m, spec.semantic_dim), |_| rng.sample::<f64, _>(StandardNormal));
    let centers = Array2::from_shape_fn((spec.n_labels, m), |_| rng.random_range(-1.0..1.0));

    let mut x = latent.dot(&to_affinity);
    let mut y = latent.dot(&to_semantic);
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).expect("validated");
        x.mapv_inplace(|v| v + noise.sample(&mut rng));
        y.mapv_inplace(|v| v + noise.sample(&mut rng));
    }
    let labels = (0..n)
        .map(|i| {
            (0..spec.n_labels)
                .min_by(|&a, &b| {
                    euclidean(latent.row(i), centers.row(a))
                        .total_cmp(&euclidean(latent.row(i), centers.row(b)))
                        .then(a.cmp(&b))
                })
                .expect("n_labels >= 1")
        })
        .collect();
    let ids = (0..n).map(|i| format!("e{i}")).collect();
    Ok(SyntheticData {
        domain: DomainMatrix::new(ids, x)?,
        semantic: y,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub spec: SyntheticTransferSpec,
    pub delta: usize,
    pub config: ImputationConfig,
    /// k-NN accuracy of the hidden entities using their imputed vectors.
    pub imputed_accuracy: f64,
    /// Same, using the hidden ground-truth vectors.
    pub truth_accuracy: f64,
    /// Same, with Gaussian noise matching the anchors' per-column moments.
    pub random_accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_change: f64,
}

impl TransferReport {
    /// Two-column `key\tvalue` table.
    pub fn to_tsv(&self) -> String {
        let s = &self.spec;
        let c = &self.config;
        let mut out = String::from("key\tvalue\n");
        let rows: [(&str, String); 21] = [
            ("n", s.n.to_string()),
            ("p", s.p.to_string()),
            ("q", (s.n - s.p).to_string()),
            ("manifold_dim", s.manifold_dim.to_string()),
            ("affinity_dim", s.affinity_dim.to_string()),
            ("semantic_dim", s.semantic_dim.to_string()),
            ("noise_sigma", s.noise_sigma.to_string()),
            ("n_labels", s.n_labels.to_string()),
            ("seed", s.seed.to_string()),
            ("k", s.knn_k.to_string()),
            ("delta", self.delta.to_string()),
            ("eta", c.eta.to_string()),
            ("max_iter", c.max_iter.to_string()),
            ("init_sigma", c.init_sigma.to_string()),
            ("imputed_accuracy", format_accuracy(self.imputed_accuracy)),
            ("truth_accuracy", format_accuracy(self.truth_accuracy)),
            ("random_accuracy", format_accuracy(self.random_accuracy)),
            ("iterations", self.iterations.to_string()),
            ("converged", self.converged.to_string()),
            ("final_relative_change", format!("{:e}", self.final_relative_change)),
            ("init_seed", c.seed.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }
}

/// Samples an instance, hides the last `n − p` semantic vectors, imputes
/// them and scores the hidden entities three ways.
pub fn run_synthetic_transfer(
    spec: &SyntheticTransferSpec,
    cfg: &ImputationConfig,
    delta: usize,
) -> Result<TransferReport> {
    let data = sample_synthetic(spec)?;
    let p = spec.p;
    let y_p = data.semantic.slice(s![..p, ..]);
    let opts = PipelineOptions {
        delta,
        imputation: *cfg,
    };
    let block = impute_block(&data.domain, y_p, &opts, |_, _| {})?;

    let names: Vec<String> = (0..spec.n_labels).map(|l| format!("c{l}")).collect();
    let hidden: Vec<usize> = (p..spec.n).collect();
    let score = |vectors: Array2<f64>| -> Result<f64> {
        let set = LabeledEmbeddings::new(vectors, data.labels.clone(), names.clone())?;
        knn_accuracy(&set, spec.knn_k, &hidden)
    };

    let truth_accuracy = score(data.semantic.clone())?;
    let imputed_accuracy = score(block.result.y.clone())?;
    let random_accuracy = score(random_fill(y_p, spec.n - p, spec.seed))?;

    Ok(TransferReport {
        spec: *spec,
        delta,
        config: *cfg,
        imputed_accuracy,
        truth_accuracy,
        random_accuracy,
        iterations: block.result.iterations,
        converged: block.result.converged,
        final_relative_change: block.result.final_relative_change,
    })
}

/// `y_p` followed by `q` Gaussian rows with the anchors' column means and
/// standard deviations.
fn random_fill(y_p: ArrayView2<'_, f64>, q: usize, seed: u64) -> Array2<f64> {
    let (p, s) = y_p.dim();
    let mean = y_p.mean_axis(Axis(0)).expect("p >= 1");
    let std = y_p.std_axis(Axis(0), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut out = Array2::zeros((p + q, s));
    out.slice_mut(s![..p, ..]).assign(&y_p);
    for r in p..p + q {
        for c in 0..s {
            let z: f64 = rng.sample(StandardNormal);
            out[[r, c]] = mean[c] + std[c] * z;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Delta,
    Eta,
}

impl FromStr for SweepParameter {
    type Err = LsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Self::Delta),
            "eta" => Ok(Self::Eta),
            other => Err(LsiError::invalid(format!(
                "unknown sweep parameter {other:?} (expected delta or eta)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
}

/// Re-runs the transfer experiment once per value of `parameter`, all else
/// fixed. Rows come back in the order of `values`.
pub fn sensitivity_sweep(
    parameter: SweepParameter,
    values: &[f64],
    spec: &SyntheticTransferSpec,
    cfg: &ImputationConfig,
    delta: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(LsiError::invalid("sweep needs at least one value"));
    }
    let cells = par::map_range(values.len(), |k| -> Result<SweepRow> {
        let value = values[k];
        let (mut cfg, mut delta) = (*cfg, delta);
        match parameter {
            SweepParameter::Delta => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(LsiError::invalid(format!("delta must be a positive integer, got {value}")));
                }
                delta = value as usize;
            }
            SweepParameter::Eta => cfg.eta = value,
        }
        let report = run_synthetic_transfer(spec, &cfg, delta)?;
        Ok(SweepRow {
            value,
            accuracy: report.imputed_accuracy,
        })
    });
    cells.into_iter().collect()
}

/// `parameter\taccuracy` table.
pub fn sweep_tsv(parameter: SweepParameter, rows: &[SweepRow]) -> String {
    let name = match parameter {
        SweepParameter::Delta => "delta",
        SweepParameter::Eta => "eta",
    };
    let mut out = format!("{name}\taccuracy\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}", r.value, format_accuracy(r.accuracy));
    }
    out
}
