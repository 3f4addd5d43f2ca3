//! Cosine distance matrices over signature vectors, category averaging with
//! missing-group imputation, UPGMA clustering and Newick output.

mod newick;

pub use newick::{to_newick, DEFAULT_NEWICK_PRECISION};

use crate::signatures::Signature;
use nalgebra::DMatrix;
use std::collections::BTreeSet;
use std::io::Write;
use thiserror::Error;

/// A labelled symmetric distance matrix with zero diagonal and non-negative
/// finite entries. Matrices built by [`cosine_distance_matrix`] additionally
/// keep every entry in [0, 2].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    values: DMatrix<f64>,
}

#[derive(Debug, Error)]
pub enum PhyloError {
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("signature vectors have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("signature vector for {0:?} is all zero")]
    ZeroVector(String),
    #[error("label {0:?} is not in the group list")]
    UnknownLabel(String),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl DistanceMatrix {
    /// Validates symmetry, zero diagonal and non-negative finite entries.
    pub fn new(labels: Vec<String>, values: DMatrix<f64>) -> Result<Self, PhyloError> {
        let n = labels.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(PhyloError::InvalidMatrix(format!(
                "{} labels for a {}×{} matrix",
                n,
                values.nrows(),
                values.ncols()
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(PhyloError::DuplicateLabel(l.clone()));
            }
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(PhyloError::InvalidMatrix(format!(
                    "diagonal entry ({i}, {i}) is {}",
                    values[(i, i)]
                )));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(PhyloError::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {v} is not a distance"
                    )));
                }
                if (v - values[(j, i)]).abs() > 1e-12 {
                    return Err(PhyloError::InvalidMatrix(format!(
                        "asymmetric at ({i}, {j}): {v} vs {}",
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { labels, values })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn by_label(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[(i, j)])
    }

    /// Labelled CSV: header row and column of group ids.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), PhyloError> {
        let mut header = String::new();
        for l in &self.labels {
            header.push(',');
            header.push_str(l);
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            let mut row = self.labels[i].clone();
            for j in 0..self.len() {
                row.push_str(&format!(",{}", self.values[(i, j)]));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Pairwise cosine distances `1 − cos(vᵢ, vⱼ)` over full signature vectors.
pub fn cosine_distance_matrix(signatures: &[Signature]) -> Result<DistanceMatrix, PhyloError> {
    if signatures.len() < 2 {
        return Err(PhyloError::TooFew {
            needed: 2,
            got: signatures.len(),
        });
    }
    let dim = signatures[0].values.len();
    let mut norms = Vec::with_capacity(signatures.len());
    for sig in signatures {
        if sig.values.len() != dim {
            return Err(PhyloError::LengthMismatch {
                left: dim,
                right: sig.values.len(),
            });
        }
        let norm = sig.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(PhyloError::ZeroVector(sig.group_id.clone()));
        }
        norms.push(norm);
    }

    let n = signatures.len();
    let mut values = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = signatures[i]
                .values
                .iter()
                .zip(&signatures[j].values)
                .map(|(a, b)| a * b)
                .sum();
            let d = (1.0 - dot / (norms[i] * norms[j])).clamp(0.0, 2.0);
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    let labels = signatures.iter().map(|s| s.group_id.clone()).collect();
    DistanceMatrix::new(labels, values)
}

/// Averages distance matrices over all of `all_groups`. A matrix that lacks
/// one side of a pair contributes distance 1 for that pair; the diagonal
/// stays zero.
pub fn average_distance(
    matrices: &[DistanceMatrix],
    all_groups: &[String],
) -> Result<DistanceMatrix, PhyloError> {
    if matrices.is_empty() {
        return Err(PhyloError::TooFew { needed: 1, got: 0 });
    }
    for m in matrices {
        for l in m.labels() {
            if !all_groups.contains(l) {
                return Err(PhyloError::UnknownLabel(l.clone()));
            }
        }
    }

    let n = all_groups.len();
    let mut values = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut total = 0.0;
            for m in matrices {
                total += m
                    .by_label(&all_groups[i], &all_groups[j])
                    .unwrap_or(1.0);
            }
            let avg = total / matrices.len() as f64;
            values[(i, j)] = avg;
            values[(j, i)] = avg;
        }
    }
    DistanceMatrix::new(all_groups.to_vec(), values)
}

/// A node of a rooted ultrametric tree. Leaves sit at height zero; a branch's
/// length is the parent height minus the child height.
#[derive(Debug, Clone, PartialEq)]
pub enum PhyloNode {
    Leaf {
        label: String,
    },
    Internal {
        height: f64,
        children: Box<[PhyloNode; 2]>,
    },
}

impl PhyloNode {
    pub fn height(&self) -> f64 {
        match self {
            PhyloNode::Leaf { .. } => 0.0,
            PhyloNode::Internal { height, .. } => *height,
        }
    }

    /// Lexicographically smallest leaf label under this node.
    pub fn min_leaf(&self) -> &str {
        match self {
            PhyloNode::Leaf { label } => label,
            PhyloNode::Internal { children, .. } => {
                children[0].min_leaf().min(children[1].min_leaf())
            }
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PhyloNode::Leaf { label } => out.push(label),
            PhyloNode::Internal { children, .. } => {
                children[0].collect_leaves(out);
                children[1].collect_leaves(out);
            }
        }
    }
}

/// A binary rooted ultrametric tree produced by UPGMA.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloTree {
    pub root: PhyloNode,
}

impl PhyloTree {
    pub fn root_height(&self) -> f64 {
        self.root.height()
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    /// Leaf-label sets of every internal node, root included.
    pub fn clades(&self) -> Vec<BTreeSet<String>> {
        let mut out = Vec::new();
        fn walk(node: &PhyloNode, out: &mut Vec<BTreeSet<String>>) -> BTreeSet<String> {
            match node {
                PhyloNode::Leaf { label } => BTreeSet::from([label.clone()]),
                PhyloNode::Internal { children, .. } => {
                    let mut set = walk(&children[0], out);
                    set.extend(walk(&children[1], out));
                    out.push(set.clone());
                    set
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Cophenetic distance between two leaves: twice the height of their
    /// lowest common ancestor.
    pub fn cophenetic(&self, a: &str, b: &str) -> Option<f64> {
        fn lca_height(node: &PhyloNode, a: &str, b: &str) -> Option<f64> {
            match node {
                PhyloNode::Leaf { .. } => None,
                PhyloNode::Internal { height, children } => {
                    for child in children.iter() {
                        let mut leaves = Vec::new();
                        child.collect_leaves(&mut leaves);
                        if leaves.contains(&a) && leaves.contains(&b) {
                            return lca_height(child, a, b);
                        }
                    }
                    let mut leaves = Vec::new();
                    node.collect_leaves(&mut leaves);
                    (leaves.contains(&a) && leaves.contains(&b)).then_some(*height)
                }
            }
        }
        if a == b {
            return Some(0.0);
        }
        lca_height(&self.root, a, b).map(|h| 2.0 * h)
    }
}

struct Cluster {
    node: PhyloNode,
    size: usize,
    /// Smallest leaf label, used for deterministic tie-breaking.
    rep: String,
}

/// Unweighted pair group method with arithmetic mean.
///
/// Repeatedly merges the closest pair of clusters at height d/2; distances to
/// a merged cluster are the size-weighted mean of member distances. Ties are
/// broken by the lexicographically smallest (rep, rep) label pair.
pub fn upgma(d: &DistanceMatrix) -> Result<PhyloTree, PhyloError> {
    let n = d.len();
    if n < 2 {
        return Err(PhyloError::TooFew { needed: 2, got: n });
    }

    let mut clusters: Vec<Cluster> = d
        .labels()
        .iter()
        .map(|l| Cluster {
            node: PhyloNode::Leaf { label: l.clone() },
            size: 1,
            rep: l.clone(),
        })
        .collect();
    let mut dist = d.values.clone();
    let mut active: Vec<usize> = (0..n).collect();

    while active.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let dij = dist[(i, j)];
                let better = match best {
                    None => true,
                    Some((bi, bj, bd)) => {
                        if dij != bd {
                            dij < bd
                        } else {
                            let pair = ordered_pair(&clusters[i].rep, &clusters[j].rep);
                            let best_pair = ordered_pair(&clusters[bi].rep, &clusters[bj].rep);
                            pair < best_pair
                        }
                    }
                };
                if better {
                    best = Some((i, j, dij));
                }
            }
        }
        let (i, j, dij) = best.expect("at least one active pair");

        let merged_size = clusters[i].size + clusters[j].size;
        let height = dij / 2.0;
        // Children ordered by smallest leaf label for determinism.
        let (first, second) = if clusters[i].rep <= clusters[j].rep {
            (i, j)
        } else {
            (j, i)
        };
        let node = PhyloNode::Internal {
            height,
            children: Box::new([clusters[first].node.clone(), clusters[second].node.clone()]),
        };
        let rep = clusters[first].rep.clone();

        // Size-weighted average distance from the merged cluster to the rest.
        let (wi, wj) = (clusters[i].size as f64, clusters[j].size as f64);
        for &other in &active {
            if other == i || other == j {
                continue;
            }
            let updated = (wi * dist[(i, other)] + wj * dist[(j, other)]) / (wi + wj);
            dist[(i, other)] = updated;
            dist[(other, i)] = updated;
        }

        clusters[i] = Cluster {
            node,
            size: merged_size,
            rep,
        };
        active.retain(|&idx| idx != j);
    }

    Ok(PhyloTree {
        root: clusters[active[0]].node.clone(),
    })
}

fn ordered_pair<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
