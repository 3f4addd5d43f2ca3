//! The analysis manifest: a JSON document describing which matrix files make
//! up the experiment-control dataset.
//!
//! Relative paths are resolved against the manifest's own directory.

use super::format::read_matrix_header;
use super::profile::LanguageProfile;
use super::ModelIoError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Paths of one (group, layer, category) entry, resolved to absolute paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryPaths {
    pub experimental: PathBuf,
    pub control: PathBuf,
    /// Row count shared by both matrices of the pair.
    pub rows: u64,
    /// Columns of the experimental matrix (the shared dimension d).
    pub experimental_cols: u64,
    /// Columns of the control matrix (the per-group dimension d_ℓ).
    pub control_cols: u64,
}

/// A fully validated experiment-control dataset layout.
///
/// Every referenced matrix has been header-checked (dimensions read, payload
/// not loaded); all experimental matrices share the same column count and
/// paired matrices agree on rows.
#[derive(Debug, Clone)]
pub struct AnalysisSet {
    pub groups: Vec<String>,
    pub layers: Vec<usize>,
    pub categories: Vec<String>,
    pub entries: BTreeMap<(String, usize, String), EntryPaths>,
    /// Optional task → (group → score) map consumed by external-score
    /// correlation analyses.
    pub external_scores: BTreeMap<String, BTreeMap<String, f64>>,
    /// Optional precomputed per-group profiles.
    pub profiles: BTreeMap<String, LanguageProfile>,
    /// Shared experimental dimension d, identical across all entries.
    pub experimental_cols: u64,
}

impl AnalysisSet {
    pub fn entry(&self, group: &str, layer: usize, category: &str) -> Option<&EntryPaths> {
        self.entries
            .get(&(group.to_string(), layer, category.to_string()))
    }

    /// Groups, in manifest order, that have an entry for (layer, category).
    pub fn groups_with_entry(&self, layer: usize, category: &str) -> Vec<String> {
        self.groups
            .iter()
            .filter(|g| self.entry(g, layer, category).is_some())
            .cloned()
            .collect()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawManifest {
    groups: Vec<String>,
    layers: Vec<usize>,
    categories: Vec<String>,
    entries: Vec<RawEntry>,
    #[serde(default)]
    external_scores: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    profiles: Vec<LanguageProfile>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawEntry {
    group: String,
    layer: usize,
    category: String,
    experimental: PathBuf,
    control: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn checked_header(path: &PathBuf) -> Result<super::MatrixHeader, ModelIoError> {
    if !path.is_file() {
        return Err(ModelIoError::DanglingPath(path.clone()));
    }
    read_matrix_header(path)
}

/// Loads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<AnalysisSet, ModelIoError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(ModelIoError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let raw: RawManifest =
        serde_json::from_str(&text).map_err(|e| ModelIoError::ParseError(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    if raw.groups.is_empty() {
        return Err(ModelIoError::ParseError("no groups declared".into()));
    }
    for (name, list) in [
        ("groups", &raw.groups),
        ("categories", &raw.categories),
    ] {
        let mut seen = std::collections::BTreeSet::new();
        for item in list {
            if !seen.insert(item) {
                return Err(ModelIoError::ParseError(format!(
                    "duplicate entry {item:?} in {name}"
                )));
            }
        }
    }

    let mut entries = BTreeMap::new();
    let mut shared_cols: Option<(u64, String)> = None;
    for e in &raw.entries {
        if !raw.groups.contains(&e.group) {
            return Err(ModelIoError::ParseError(format!(
                "entry references undeclared group {:?}",
                e.group
            )));
        }
        if !raw.layers.contains(&e.layer) {
            return Err(ModelIoError::ParseError(format!(
                "entry references undeclared layer {}",
                e.layer
            )));
        }
        if !raw.categories.contains(&e.category) {
            return Err(ModelIoError::ParseError(format!(
                "entry references undeclared category {:?}",
                e.category
            )));
        }

        let experimental = resolve(&base, &e.experimental);
        let control = resolve(&base, &e.control);
        let exp_header = checked_header(&experimental)?;
        let ctl_header = checked_header(&control)?;

        if exp_header.rows != ctl_header.rows {
            return Err(ModelIoError::DimensionMismatch(format!(
                "paired matrices for ({}, {}, {}) disagree on rows: {} vs {}",
                e.group, e.layer, e.category, exp_header.rows, ctl_header.rows
            )));
        }
        match &shared_cols {
            None => shared_cols = Some((exp_header.cols, e.group.clone())),
            Some((d, first_group)) => {
                if exp_header.cols != *d {
                    return Err(ModelIoError::DimensionMismatch(format!(
                        "experimental cols differ across groups: {} has {}, {} has {}",
                        first_group, d, e.group, exp_header.cols
                    )));
                }
            }
        }

        let key = (e.group.clone(), e.layer, e.category.clone());
        let paths = EntryPaths {
            experimental,
            control,
            rows: exp_header.rows,
            experimental_cols: exp_header.cols,
            control_cols: ctl_header.cols,
        };
        if entries.insert(key, paths).is_some() {
            return Err(ModelIoError::ParseError(format!(
                "duplicate entry for ({}, {}, {})",
                e.group, e.layer, e.category
            )));
        }
    }

    let experimental_cols = match shared_cols {
        Some((d, _)) => d,
        None => return Err(ModelIoError::ParseError("manifest declares no entries".into())),
    };

    let mut profiles = BTreeMap::new();
    for p in raw.profiles {
        if !raw.groups.contains(&p.group_id) {
            return Err(ModelIoError::ParseError(format!(
                "profile for undeclared group {:?}",
                p.group_id
            )));
        }
        profiles.insert(p.group_id.clone(), p);
    }

    Ok(AnalysisSet {
        groups: raw.groups,
        layers: raw.layers,
        categories: raw.categories,
        entries,
        external_scores: raw.external_scores,
        profiles,
        experimental_cols,
    })
}
