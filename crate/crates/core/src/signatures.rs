//! Per-group signature vectors extracted from fitted models, their condensed
//! scalar intensities, and the layer × category tables consumed by the
//! statistics and phylogenetics stages.

use crate::parafac2::{Parafac2Error, Parafac2Model};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

/// How a signature vector is condensed into a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CondenseMode {
    /// Plain arithmetic mean of the signed values.
    #[default]
    Signed,
    /// Mean of absolute values, offered for sensitivity analysis.
    Absolute,
}

/// The signature of one (group, layer, category) cell: `diag(Σ_ℓ)` and its
/// condensed mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub group_id: String,
    pub layer: usize,
    pub category: String,
    pub values: Vec<f64>,
    pub condensed: f64,
}

/// Model diagnostics carried along with each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProvenance {
    pub rank: usize,
    pub fit: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub type CellKey = (String, usize, String);

/// Signatures from one or more decomposition runs, keyed by
/// (group, layer, category). Missing cells are absent, never zero-filled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignatureTable {
    groups: Vec<String>,
    layers: Vec<usize>,
    categories: Vec<String>,
    cells: BTreeMap<CellKey, Signature>,
    provenance: BTreeMap<CellKey, CellProvenance>,
}

#[derive(Debug, Error)]
pub enum SignaturesError {
    #[error("cannot condense an empty vector")]
    EmptyVector,
    #[error("duplicate cell ({0}, {1}, {2})")]
    DuplicateCell(String, usize, String),
    #[error(transparent)]
    Model(#[from] Parafac2Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Neumaier-compensated mean of the signed values.
pub fn condense(values: &[f64]) -> Result<f64, SignaturesError> {
    if values.is_empty() {
        return Err(SignaturesError::EmptyVector);
    }
    Ok(compensated_sum(values.iter().copied()) / values.len() as f64)
}

/// Mean of absolute values; the sensitivity-analysis variant.
pub fn condense_abs(values: &[f64]) -> Result<f64, SignaturesError> {
    if values.is_empty() {
        return Err(SignaturesError::EmptyVector);
    }
    Ok(compensated_sum(values.iter().map(|v| v.abs())) / values.len() as f64)
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

fn condense_with(values: &[f64], mode: CondenseMode) -> Result<f64, SignaturesError> {
    match mode {
        CondenseMode::Signed => condense(values),
        CondenseMode::Absolute => condense_abs(values),
    }
}

/// Copies `diag(Σ_ℓ)` out of a fitted model as a labelled signature.
pub fn extract_signature(
    model: &Parafac2Model,
    index: usize,
    group_id: &str,
    layer: usize,
    category: &str,
) -> Result<Signature, SignaturesError> {
    extract_signature_with(model, index, group_id, layer, category, CondenseMode::Signed)
}

pub fn extract_signature_with(
    model: &Parafac2Model,
    index: usize,
    group_id: &str,
    layer: usize,
    category: &str,
    mode: CondenseMode,
) -> Result<Signature, SignaturesError> {
    let sigma = model
        .sigma
        .get(index)
        .ok_or(Parafac2Error::IndexOutOfRange {
            index,
            len: model.sigma.len(),
        })?;
    let values: Vec<f64> = sigma.iter().copied().collect();
    let condensed = condense_with(&values, mode)?;
    Ok(Signature {
        group_id: group_id.to_string(),
        layer,
        category: category.to_string(),
        values,
        condensed,
    })
}

/// Labels identifying one decomposition run: the (layer, category) it covers
/// and its group order.
#[derive(Debug, Clone)]
pub struct RunLabels {
    pub layer: usize,
    pub category: String,
    pub group_ids: Vec<String>,
}

/// Assembles signatures from a list of decomposition runs into one table.
pub fn build_table<'a, I>(runs: I) -> Result<SignatureTable, SignaturesError>
where
    I: IntoIterator<Item = (RunLabels, &'a Parafac2Model)>,
{
    build_table_with(runs, CondenseMode::Signed)
}

pub fn build_table_with<'a, I>(runs: I, mode: CondenseMode) -> Result<SignatureTable, SignaturesError>
where
    I: IntoIterator<Item = (RunLabels, &'a Parafac2Model)>,
{
    let mut table = SignatureTable::default();
    for (labels, model) in runs {
        let provenance = CellProvenance {
            rank: model.rank,
            fit: model.fit,
            iterations: model.iterations,
            converged: model.converged,
        };
        for (idx, group) in labels.group_ids.iter().enumerate() {
            let sig =
                extract_signature_with(model, idx, group, labels.layer, &labels.category, mode)?;
            table.insert_with_provenance(sig, Some(provenance))?;
        }
    }
    Ok(table)
}

impl SignatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sig: Signature) -> Result<(), SignaturesError> {
        self.insert_with_provenance(sig, None)
    }

    pub fn insert_with_provenance(
        &mut self,
        sig: Signature,
        provenance: Option<CellProvenance>,
    ) -> Result<(), SignaturesError> {
        let key = (sig.group_id.clone(), sig.layer, sig.category.clone());
        if self.cells.contains_key(&key) {
            return Err(SignaturesError::DuplicateCell(sig.group_id, sig.layer, sig.category));
        }
        if !self.groups.contains(&sig.group_id) {
            self.groups.push(sig.group_id.clone());
        }
        if !self.layers.contains(&sig.layer) {
            self.layers.push(sig.layer);
            self.layers.sort_unstable();
        }
        if !self.categories.contains(&sig.category) {
            self.categories.push(sig.category.clone());
        }
        if let Some(p) = provenance {
            self.provenance.insert(key.clone(), p);
        }
        self.cells.insert(key, sig);
        Ok(())
    }

    /// Group ids in insertion order.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    /// Layer indices, ascending.
    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, group: &str, layer: usize, category: &str) -> Option<&Signature> {
        self.cells
            .get(&(group.to_string(), layer, category.to_string()))
    }

    pub fn provenance(&self, group: &str, layer: usize, category: &str) -> Option<&CellProvenance> {
        self.provenance
            .get(&(group.to_string(), layer, category.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Signature> {
        self.cells.values()
    }

    /// Writes the table as CSV: `group,layer,category,condensed,v1..vk`,
    /// values with 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), SignaturesError> {
        let rank = self.cells.values().map(|s| s.values.len()).max().unwrap_or(0);
        let mut header = String::from("group,layer,category,condensed");
        for i in 1..=rank {
            header.push_str(&format!(",v{i}"));
        }
        writeln!(w, "{header}")?;
        for sig in self.cells.values() {
            let mut row = format!(
                "{},{},{},{:.16e}",
                csv_field(&sig.group_id),
                sig.layer,
                csv_field(&sig.category),
                sig.condensed
            );
            for v in &sig.values {
                row.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Reads a table back from the CSV written by [`Self::write_csv`].
    pub fn read_csv(r: impl BufRead) -> Result<Self, SignaturesError> {
        let mut table = SignatureTable::default();
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| SignaturesError::Csv("empty file".into()))?;
        if !header.starts_with("group,layer,category,condensed") {
            return Err(SignaturesError::Csv(format!("unexpected header {header:?}")));
        }
        for (num, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields = split_csv(&line);
            if fields.len() < 4 {
                return Err(SignaturesError::Csv(format!("row {}: too few fields", num + 2)));
            }
            let parse = |s: &str| -> Result<f64, SignaturesError> {
                s.parse::<f64>()
                    .map_err(|e| SignaturesError::Csv(format!("row {}: {e}", num + 2)))
            };
            let layer: usize = fields[1]
                .parse()
                .map_err(|e| SignaturesError::Csv(format!("row {}: {e}", num + 2)))?;
            let condensed = parse(&fields[3])?;
            let mut values = Vec::with_capacity(fields.len() - 4);
            for f in &fields[4..] {
                values.push(parse(f)?);
            }
            table.insert(Signature {
                group_id: fields[0].clone(),
                layer,
                category: fields[2].clone(),
                values,
                condensed,
            })?;
        }
        Ok(table)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' => quoted = true,
            ',' if !quoted => {
                fields.push(std::mem::take(&mut current));
            }
            other => current.push(other),
        }
    }
    fields.push(current);
    fields
}
