//! Column centering and per-group cross-covariance slices.
//!
//! All accumulation is 64-bit with a pairwise (tree) summation order fixed by
//! row index, so results do not depend on thread count or scheduling.

use crate::model_io::{read_matrix, AnalysisSet, ModelIoError, ReprMatrix};
use nalgebra::DMatrix;
use thiserror::Error;

/// Rows below this threshold are reduced with a single matrix product; larger
/// ranges split in half, fixing the summation tree.
const PAIRWISE_BLOCK: usize = 64;

/// The cross-covariance matrix of one group: `omega = ZᵀY`, shape d_ℓ × d.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSlice {
    pub group_id: String,
    pub omega: DMatrix<f64>,
    /// Number of data points the slice was computed from.
    pub m: usize,
}

impl CovarianceSlice {
    /// Rows of omega (the per-group control dimension d_ℓ).
    pub fn control_dim(&self) -> usize {
        self.omega.nrows()
    }

    /// Columns of omega (the shared experimental dimension d).
    pub fn shared_dim(&self) -> usize {
        self.omega.ncols()
    }
}

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("row counts differ: {left} vs {right}")]
    RowCountMismatch { left: usize, right: usize },
    #[error("normalization needs at least 2 rows, got {0}")]
    DegenerateSample(usize),
    #[error("matrix is not column-centered (column {col} sums to {sum:e})")]
    NotCentered { col: usize, sum: f64 },
    #[error("group {group} has no entry for layer {layer}, category {category:?}")]
    MissingEntry {
        group: String,
        layer: usize,
        category: String,
    },
    #[error(transparent)]
    Io(#[from] ModelIoError),
}

fn pairwise_col_sums(m: &DMatrix<f64>, r0: usize, r1: usize) -> Vec<f64> {
    if r1 - r0 <= PAIRWISE_BLOCK {
        let mut sums = vec![0.0; m.ncols()];
        for r in r0..r1 {
            for (c, s) in sums.iter_mut().enumerate() {
                *s += m[(r, c)];
            }
        }
        sums
    } else {
        let mid = r0 + (r1 - r0) / 2;
        let left = pairwise_col_sums(m, r0, mid);
        let right = pairwise_col_sums(m, mid, r1);
        left.iter().zip(&right).map(|(a, b)| a + b).collect()
    }
}

/// Subtracts each column's mean so every column sums to zero. Metadata and
/// dtype are preserved.
pub fn center_columns(m: &ReprMatrix) -> ReprMatrix {
    let rows = m.rows();
    let sums = pairwise_col_sums(&m.values, 0, rows);
    let mut values = m.values.clone();
    for (c, sum) in sums.iter().enumerate() {
        let mean = sum / rows as f64;
        for r in 0..rows {
            values[(r, c)] -= mean;
        }
    }
    ReprMatrix {
        values,
        group_id: m.group_id.clone(),
        layer: m.layer,
        category: m.category.clone(),
        dtype: m.dtype,
    }
}

/// Checks that every column of `m` sums to zero within the centering
/// tolerance `1e-12 × rows × max|value|`.
pub fn assert_centered(m: &ReprMatrix) -> Result<(), CovarianceError> {
    let max_abs = m.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * m.rows() as f64 * max_abs.max(1.0);
    let sums = pairwise_col_sums(&m.values, 0, m.rows());
    for (c, sum) in sums.iter().enumerate() {
        if sum.abs() > tol {
            return Err(CovarianceError::NotCentered { col: c, sum: *sum });
        }
    }
    Ok(())
}

fn pairwise_cross(z: &DMatrix<f64>, y: &DMatrix<f64>, r0: usize, r1: usize) -> DMatrix<f64> {
    if r1 - r0 <= PAIRWISE_BLOCK {
        let zb = z.rows(r0, r1 - r0);
        let yb = y.rows(r0, r1 - r0);
        zb.transpose() * yb
    } else {
        let mid = r0 + (r1 - r0) / 2;
        pairwise_cross(z, y, r0, mid) + pairwise_cross(z, y, mid, r1)
    }
}

/// Computes `omega = ZᵀY`, optionally divided by m − 1.
///
/// Callers are responsible for centering; [`cross_covariance_strict`] verifies
/// it first.
pub fn cross_covariance(
    z: &ReprMatrix,
    y: &ReprMatrix,
    normalize: bool,
) -> Result<CovarianceSlice, CovarianceError> {
    let m = z.rows();
    if m != y.rows() {
        return Err(CovarianceError::RowCountMismatch {
            left: m,
            right: y.rows(),
        });
    }
    if normalize && m < 2 {
        return Err(CovarianceError::DegenerateSample(m));
    }
    let mut omega = pairwise_cross(&z.values, &y.values, 0, m);
    if normalize {
        omega /= (m - 1) as f64;
    }
    Ok(CovarianceSlice {
        group_id: z.group_id.clone(),
        omega,
        m,
    })
}

/// As [`cross_covariance`], but first verifies both inputs are centered.
pub fn cross_covariance_strict(
    z: &ReprMatrix,
    y: &ReprMatrix,
    normalize: bool,
) -> Result<CovarianceSlice, CovarianceError> {
    assert_centered(z)?;
    assert_centered(y)?;
    cross_covariance(z, y, normalize)
}

/// Builds one slice per group in `groups` order for the given layer and
/// category. Matrices are loaded from disk, labelled, optionally centered.
pub fn build_slices_for_groups(
    set: &AnalysisSet,
    groups: &[String],
    layer: usize,
    category: &str,
    center: bool,
    normalize: bool,
) -> Result<Vec<CovarianceSlice>, CovarianceError> {
    let mut slices = Vec::with_capacity(groups.len());
    for group in groups {
        let entry = set
            .entry(group, layer, category)
            .ok_or_else(|| CovarianceError::MissingEntry {
                group: group.clone(),
                layer,
                category: category.to_string(),
            })?;
        let label = |mut m: ReprMatrix| {
            m.group_id = group.clone();
            m.layer = layer;
            m.category = category.to_string();
            m
        };
        let mut y = label(read_matrix(&entry.experimental)?);
        let mut z = label(read_matrix(&entry.control)?);
        if center {
            y = center_columns(&y);
            z = center_columns(&z);
        }
        slices.push(cross_covariance(&z, &y, normalize)?);
    }
    Ok(slices)
}

/// Builds one slice per manifest group, erroring if any group lacks the
/// requested (layer, category) entry.
pub fn build_slices(
    set: &AnalysisSet,
    layer: usize,
    category: &str,
    center: bool,
    normalize: bool,
) -> Result<Vec<CovarianceSlice>, CovarianceError> {
    build_slices_for_groups(set, &set.groups, layer, category, center, normalize)
}
