//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on invalid input or usage, 2 when the
//! diffusion hit `--max-iter` before reaching `--eta` (output is still
//! written).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::engine::{ImputationConfig, DEFAULT_ETA, DEFAULT_INIT_SIGMA, DEFAULT_MAX_ITER};
use crate::error::{LsiError, Result};
use crate::eval::{
    format_accuracy, knn_accuracy, run_synthetic_transfer, sensitivity_sweep, sweep_tsv,
    LabeledEmbeddings, SweepParameter, SyntheticTransferSpec,
};
use crate::geometry::{
    correlation_domain_matrix, euclidean_distance_matrix, read_bytes, DomainMatrix, ReturnsTable,
    DEFAULT_MAX_MISSING_FRACTION,
};
use crate::graph::{mst_knn_graph, DEFAULT_DELTA};
use crate::io::{read_labels, EmbeddingTable};
use crate::par;
use crate::pipeline::{self, PipelineOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lsi", version, about = "Latent semantic imputation of missing embedding vectors")]
pub struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Impute embeddings for domain entities missing from the embedding file.
    Impute(ImputeArgs),
    /// Evaluate embeddings against labels.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Summarize the MST-k-NN graph of a domain matrix.
    GraphStats(GraphStatsArgs),
    /// Run a synthetic two-space transfer experiment.
    Synth(SynthArgs),
    /// Sweep delta or eta over a synthetic experiment.
    Sweep(SweepArgs),
    /// Build a correlation domain matrix from a returns CSV.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Domain matrix CSV: entity id, then feature columns.
    #[arg(long)]
    pub domain: PathBuf,
    /// Known embeddings (word2vec text format).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output embeddings: the input table plus the imputed entities.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write a key=value run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Dump the weight matrix as `i j w_ij` lines (aligned order).
    #[arg(long)]
    pub dump_weights: Option<PathBuf>,
    /// Print `iter=<t> rel_change=<v>` per iteration to stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Minimum in-degree of the neighbor graph.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: usize,
    /// Relative l1 change of the unknown block below which iteration stops.
    /// Scale-free, but check it against the magnitude of your vectors.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization of unknown vectors.
    #[arg(long, default_value_t = DEFAULT_INIT_SIGMA)]
    pub init_sigma: f64,
}

impl SolverArgs {
    fn config(&self) -> ImputationConfig {
        ImputationConfig {
            eta: self.eta,
            max_iter: self.max_iter,
            seed: self.seed,
            init_sigma: self.init_sigma,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Leave-one-out k-NN accuracy for each k.
    Knn(KnnArgs),
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// `entity,label` CSV with a header row.
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated neighbor counts.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct GraphStatsArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SynthSpecArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 3)]
    pub manifold_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub affinity_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub semantic_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 5)]
    pub n_labels: usize,
    /// Neighbors for the k-NN accuracy.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

impl SynthSpecArgs {
    fn spec(&self, seed: u64) -> SyntheticTransferSpec {
        SyntheticTransferSpec {
            n: self.n,
            p: self.p,
            manifold_dim: self.manifold_dim,
            affinity_dim: self.affinity_dim,
            semantic_dim: self.semantic_dim,
            noise_sigma: self.noise_sigma,
            n_labels: self.n_labels,
            seed,
            knn_k: self.k,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub spec: SynthSpecArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the TSV report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `delta` or `eta`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub spec: SynthSpecArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Returns CSV: entity id then one column per period; blank = missing.
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop entities missing more than this fraction of periods.
    #[arg(long, default_value_t = DEFAULT_MAX_MISSING_FRACTION)]
    pub max_missing: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
            } else {
                let _ = stdout.write_all(text.as_bytes());
            }
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            let _ = writeln!(stderr, "error: --threads must be at least 1");
            return EXIT_INVALID;
        }
        if let Err(e) = par::init_thread_pool(t) {
            let _ = writeln!(stderr, "warning: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Impute(a) => impute(&a, stderr),
        Command::Eval(EvalCommand::Knn(a)) => eval_knn(&a, stdout, stderr),
        Command::GraphStats(a) => graph_stats(&a, stdout),
        Command::Synth(a) => synth(&a, stdout),
        Command::Sweep(a) => sweep(&a, stdout),
        Command::Correlate(a) => correlate(&a, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INVALID
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| LsiError::io(path, e))
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => create(p)?.write_all(text.as_bytes()).map_err(|e| LsiError::io(p, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| LsiError::io("<stdout>", e)),
    }
}

/// Accumulates `key=value` manifest lines in order.
#[derive(Default)]
struct Manifest(String);

impl Manifest {
    fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key}={value}");
    }
}

fn impute(a: &ImputeArgs, stderr: &mut dyn Write) -> Result<i32> {
    let started = Instant::now();
    let cfg = a.solver.config();
    cfg.validate()?;

    let t = Instant::now();
    let domain_bytes = read_bytes(&a.domain)?;
    let embed_bytes = read_bytes(&a.embeddings)?;
    let domain = DomainMatrix::from_csv_bytes(&domain_bytes, &a.domain)?;
    let table = EmbeddingTable::from_text(&embed_bytes, &a.embeddings)?;
    let load_time = t.elapsed();

    let opts = PipelineOptions {
        delta: a.solver.delta,
        imputation: cfg,
    };
    let progress = a.progress;
    let out = pipeline::run(&domain, &table, &opts, |t, rel| {
        if progress {
            let _ = writeln!(stderr, "iter={t} rel_change={rel:e}");
        }
    })?;

    for &c in &out.block.empty_columns {
        let _ = writeln!(
            stderr,
            "warning: entity {:?} receives no positive weight from any row",
            out.problem.entities()[c]
        );
    }
    if let (Some(path), Some(w)) = (&a.dump_weights, &out.block.weights) {
        w.write_coo(create(path)?).map_err(|e| LsiError::io(path, e))?;
    }

    let t = Instant::now();
    crate::io::save_embeddings(&out.table, &a.out)?;
    let save_time = t.elapsed();

    let r = &out.block.result;
    let status = if out.problem.q == 0 {
        "nothing_to_impute"
    } else if r.converged {
        "converged"
    } else {
        "max_iter_reached"
    };

    if let Some(path) = &a.manifest {
        let mut m = Manifest::default();
        m.set("command", "impute");
        m.set("domain", a.domain.display());
        m.set("domain_sha256", sha256_hex(&domain_bytes));
        m.set("embeddings", a.embeddings.display());
        m.set("embeddings_sha256", sha256_hex(&embed_bytes));
        m.set("out", a.out.display());
        m.set("delta", opts.delta);
        m.set("eta", cfg.eta);
        m.set("max_iter", cfg.max_iter);
        m.set("seed", cfg.seed);
        m.set("init_sigma", cfg.init_sigma);
        m.set("threads", par::threads());
        m.set("n", out.problem.n());
        m.set("p", out.problem.p);
        m.set("q", out.problem.q);
        m.set("dim", table.dim());
        if let Some(g) = &out.block.graph {
            m.set("graph_edges", g.edges);
            m.set("graph_min_in_degree", g.min_in_degree);
            m.set("graph_max_in_degree", g.max_in_degree);
            m.set("graph_connected", g.connected);
        }
        m.set("empty_weight_columns", out.block.empty_columns.len());
        let tm = &out.block.timings;
        m.set("time_load_s", load_time.as_secs_f64());
        m.set("time_distances_s", tm.distances.as_secs_f64());
        m.set("time_graph_s", tm.graph.as_secs_f64());
        m.set("time_weights_s", tm.weights.as_secs_f64());
        m.set("time_iterate_s", tm.iterate.as_secs_f64());
        m.set("time_save_s", save_time.as_secs_f64());
        m.set("time_total_s", started.elapsed().as_secs_f64());
        m.set("iterations", r.iterations);
        m.set("final_relative_change", format!("{:e}", r.final_relative_change));
        m.set("converged", r.converged);
        m.set("status", status);
        create(path)?
            .write_all(m.0.as_bytes())
            .map_err(|e| LsiError::io(path, e))?;
    }

    if r.converged {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(
            stderr,
            "warning: stopped after {} iterations with relative change {:e} >= eta {:e}",
            r.iterations, r.final_relative_change, cfg.eta
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn eval_knn(a: &KnnArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let table = crate::io::load_embeddings(&a.embeddings)?;
    let pairs = read_labels(&a.labels)?;
    let (data, skipped) = LabeledEmbeddings::from_table(&table, &pairs)?;
    if !skipped.is_empty() {
        let _ = writeln!(stderr, "warning: {} labeled entities have no embedding", skipped.len());
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let mut out = String::from("k\taccuracy\n");
    for &k in &a.k {
        let acc = knn_accuracy(&data, k, &all)?;
        let _ = writeln!(out, "{k}\t{}", format_accuracy(acc));
    }
    write_output(None, &out, stdout)?;
    Ok(EXIT_OK)
}

fn graph_stats(a: &GraphStatsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let x = DomainMatrix::read_csv(&a.domain)?;
    let g = mst_knn_graph(&euclidean_distance_matrix(&x), a.delta)?;
    write_output(None, &g.stats().to_string(), stdout)?;
    Ok(EXIT_OK)
}

fn synth(a: &SynthArgs, stdout: &mut dyn Write) -> Result<i32> {
    let spec = a.spec.spec(a.solver.seed);
    let report = run_synthetic_transfer(&spec, &a.solver.config(), a.solver.delta)?;
    write_output(a.out.as_deref(), &report.to_tsv(), stdout)?;
    Ok(EXIT_OK)
}

fn sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<i32> {
    let param: SweepParameter = a.param.parse()?;
    let spec = a.spec.spec(a.solver.seed);
    let rows = sensitivity_sweep(param, &a.values, &spec, &a.solver.config(), a.solver.delta)?;
    write_output(a.out.as_deref(), &sweep_tsv(param, &rows), stdout)?;
    Ok(EXIT_OK)
}

fn correlate(a: &CorrelateArgs, stderr: &mut dyn Write) -> Result<i32> {
    let returns = ReturnsTable::read_csv(&a.returns)?;
    let x = correlation_domain_matrix(&returns, a.max_missing)?;
    let dropped = returns.entities.len() - x.n();
    if dropped > 0 {
        let _ = writeln!(stderr, "dropped {dropped} entities over the missing-value limit");
    }
    x.write_csv(create(&a.out)?).map_err(|e| LsiError::io(&a.out, e))?;
    Ok(EXIT_OK)
}
