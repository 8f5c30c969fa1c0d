//! Latent semantic imputation.
//!
//! Given a domain matrix describing `n` entities and known embedding vectors
//! for `p` of them, recovers the remaining `q = n − p` vectors:
//!
//! 1. build a minimum-spanning-tree k-NN graph over the domain rows
//!    ([`graph`]),
//! 2. solve simplex-constrained reconstruction weights over each vertex's
//!    in-neighbors ([`weights`]),
//! 3. diffuse the known vectors through the weight matrix by power
//!    iteration with the known rows held fixed ([`engine`]).
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; both paths give identical
//! results.

pub mod cli;
pub mod engine;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod nnls;
pub mod par;
pub mod pipeline;
pub mod weights;

pub use engine::{
    closed_form_solve, fix_known_block, power_iterate, power_iterate_with_progress,
    spectral_diagnostics, ImputationConfig, ImputationResult, SpectralReport,
};
pub use error::{LsiError, Result};
pub use eval::{
    knn_accuracy, run_synthetic_transfer, sensitivity_sweep, LabeledEmbeddings, SweepParameter,
    SyntheticTransferSpec, TransferReport,
};
pub use geometry::{correlation_domain_matrix, euclidean_distance_matrix, DistanceMatrix, DomainMatrix, ReturnsTable};
pub use graph::{augment_to_min_degree, build_mst, mst_knn_graph, NeighborGraph};
pub use io::{align, load_embeddings, merge_imputed, save_embeddings, AlignedProblem, EmbeddingTable};
pub use pipeline::{impute_block, PipelineOptions};
pub use weights::{assemble_weight_matrix, solve_row_weights, WeightMatrix};
