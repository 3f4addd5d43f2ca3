//! Reading and writing representation matrices, parsing analysis manifests
//! and computing corpus-level language profiles.

mod format;
mod manifest;
mod profile;

pub use format::{read_matrix, read_matrix_header, write_matrix, Dtype, MatrixHeader};
pub use manifest::{load_manifest, AnalysisSet, EntryPaths};
pub use profile::{parse_corpus, profile_corpus, profile_corpus_with, LanguageProfile, ProfileOptions};

use nalgebra::DMatrix;
use std::path::PathBuf;
use thiserror::Error;

/// A matrix of row-wise token representations tagged with group, layer and
/// category metadata. Rows are data points, columns are representation
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprMatrix {
    pub values: DMatrix<f64>,
    /// Group label (the language ℓ). Empty when the matrix was read outside
    /// of a manifest context.
    pub group_id: String,
    pub layer: usize,
    /// Morphosyntactic-category label, `"ALL"` for the unsliced corpus.
    pub category: String,
    /// Element type used on disk; values are held as f64 in memory either way.
    pub dtype: Dtype,
}

impl ReprMatrix {
    /// Wraps a matrix with default metadata (empty group, layer 0, `"ALL"`).
    pub fn new(values: DMatrix<f64>) -> Result<Self, ModelIoError> {
        Self::with_labels(values, "", 0, "ALL")
    }

    pub fn with_labels(
        values: DMatrix<f64>,
        group_id: &str,
        layer: usize,
        category: &str,
    ) -> Result<Self, ModelIoError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(ModelIoError::EmptyMatrix);
        }
        if let Some((r, c)) = find_non_finite(&values) {
            return Err(ModelIoError::NonFiniteValue { row: r, col: c });
        }
        Ok(Self {
            values,
            group_id: group_id.to_string(),
            layer,
            category: category.to_string(),
            dtype: Dtype::F64,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

pub(crate) fn find_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes, expected \"RFM1\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype byte {0}")]
    UnsupportedDtype(u8),
    #[error("header padding bytes must be zero")]
    BadPadding,
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("declared {declared} payload bytes but file holds {actual}")]
    TruncatedPayload { declared: u64, actual: u64 },
    #[error("file holds {actual} bytes beyond the declared payload")]
    TrailingData { actual: u64 },
    #[error("non-finite value at ({row}, {col})")]
    NonFiniteValue { row: usize, col: usize },
    #[error("value at ({row}, {col}) is not representable as f32")]
    NotRepresentable { row: usize, col: usize },
    #[error("manifest parse error: {0}")]
    ParseError(String),
    #[error("manifest references missing file: {0}")]
    DanglingPath(PathBuf),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("corpus line {line}: expected token<TAB>lemma")]
    CorpusFormat { line: usize },
    #[error("empty corpus")]
    EmptyCorpus,
}
