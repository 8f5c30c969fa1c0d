//! End-to-end imputation: distances, graph, weights, diffusion, merge.

use std::time::{Duration, Instant};

use ndarray::ArrayView2;

use crate::engine::{fix_known_block, power_iterate_with_progress, ImputationConfig, ImputationResult};
use crate::error::{LsiError, Result};
use crate::geometry::{euclidean_distance_matrix, DomainMatrix};
use crate::graph::{mst_knn_graph, GraphStats, DEFAULT_DELTA};
use crate::io::{align, merge_imputed, AlignedProblem, EmbeddingTable};
use crate::weights::{assemble_weight_matrix, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    /// Minimum in-degree of the neighbor graph.
    pub delta: usize,
    pub imputation: ImputationConfig,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            imputation: ImputationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub distances: Duration,
    pub graph: Duration,
    pub weights: Duration,
    pub iterate: Duration,
}

#[derive(Debug, Clone)]
pub struct BlockImputation {
    pub result: ImputationResult,
    /// Weight matrix before the anchor rows were fixed. `None` when there was
    /// nothing to impute and no graph was built.
    pub weights: Option<WeightMatrix>,
    pub graph: Option<GraphStats>,
    /// Vertices with no positive outgoing weight.
    pub empty_columns: Vec<usize>,
    pub timings: StageTimings,
}

/// Imputes rows `p..n` of `x` given `y_p` for rows `0..p`.
pub fn impute_block(
    x: &DomainMatrix,
    y_p: ArrayView2<'_, f64>,
    opts: &PipelineOptions,
    progress: impl FnMut(usize, f64),
) -> Result<BlockImputation> {
    opts.imputation.validate()?;
    let p = y_p.nrows();
    let n = x.n();
    if p == 0 {
        return Err(LsiError::NoAnchors);
    }
    if p > n {
        return Err(LsiError::invalid(format!("{p} known vectors for {n} entities")));
    }
    let mut timings = StageTimings::default();
    if p == n {
        let result = power_iterate_with_progress(
            &WeightMatrix::from_rows_unchecked((0..n).map(|i| vec![(i, 1.0)]).collect()),
            y_p,
            &opts.imputation,
            progress,
        )?;
        return Ok(BlockImputation {
            result,
            weights: None,
            graph: None,
            empty_columns: Vec::new(),
            timings,
        });
    }

    let t = Instant::now();
    let d = euclidean_distance_matrix(x);
    timings.distances = t.elapsed();

    let t = Instant::now();
    let g = mst_knn_graph(&d, opts.delta)?;
    drop(d);
    if !g.assert_anchor_reachability(p)? {
        return Err(LsiError::invalid("neighbor graph leaves unknown vertices unreachable"));
    }
    timings.graph = t.elapsed();

    let t = Instant::now();
    let w = assemble_weight_matrix(&g, x)?;
    let fixed = fix_known_block(&w, p)?;
    timings.weights = t.elapsed();

    let t = Instant::now();
    let result = power_iterate_with_progress(&fixed, y_p, &opts.imputation, progress)?;
    timings.iterate = t.elapsed();

    Ok(BlockImputation {
        empty_columns: w.empty_columns(),
        result,
        weights: Some(w),
        graph: Some(g.stats()),
        timings,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub problem: AlignedProblem,
    pub block: BlockImputation,
    /// Input table plus the imputed entries.
    pub table: EmbeddingTable,
}

/// Aligns `x` with `table`, imputes the missing entities and merges them
/// into a copy of `table`.
pub fn run(
    x: &DomainMatrix,
    table: &EmbeddingTable,
    opts: &PipelineOptions,
    progress: impl FnMut(usize, f64),
) -> Result<PipelineOutput> {
    let problem = align(x, table)?;
    let block = impute_block(&problem.x, problem.y_p.view(), opts, progress)?;
    let table = merge_imputed(table, &problem, &block.result)?;
    Ok(PipelineOutput { problem, block, table })
}
