//! Joint factorization of cross-covariance matrices between one shared
//! "experimental" representation space and many per-group "control" spaces,
//! plus the statistical and phylogenetic analyses that run on the resulting
//! per-group signature vectors.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`model_io`] — binary matrix files (RFM1), analysis manifests, corpus
//!   profiling.
//! * [`covariance`] — column centering and per-group cross-covariance slices.
//! * [`parafac2`] — the coupled decomposition `Ω_ℓ ≈ U_ℓ Σ_ℓ Vᵀ` with
//!   `U_ℓᵀU_ℓ` constant across groups, solved by direct-fitting ALS.
//! * [`signatures`] — per-group signature vectors `diag(Σ_ℓ)` and their
//!   condensed means, assembled into layer × category tables.
//! * [`stats`] — Pearson correlation, Mann-Kendall trend test,
//!   Benjamini-Hochberg FDR control and the χ² variance test.
//! * [`phylo`] — cosine distance matrices, UPGMA clustering and Newick
//!   serialization.

pub mod covariance;
pub mod model_io;
pub mod parafac2;
pub mod phylo;
pub mod signatures;
pub mod stats;

pub use covariance::{build_slices, center_columns, cross_covariance, CovarianceSlice};
pub use model_io::{
    load_manifest, profile_corpus, read_matrix, write_matrix, AnalysisSet, Dtype, LanguageProfile,
    ReprMatrix,
};
pub use parafac2::{decompose, fit_error, reconstruct, InitStrategy, Parafac2Model, SolverOptions};
pub use phylo::{average_distance, cosine_distance_matrix, to_newick, upgma, DistanceMatrix, PhyloTree};
pub use signatures::{build_table, condense, extract_signature, Signature, SignatureTable};
pub use stats::{
    bh_fdr, chi_square_variance, external_score_correlation, layer_trend_analysis, mann_kendall,
    pearson, property_correlation, Direction, TrendResult, VarianceTestResult,
};

// Re-exported so downstream crates can construct matrices without pinning
// their own nalgebra version.
pub use nalgebra;
