//! The statistical batteries run over signature tables: Pearson correlation,
//! the Mann-Kendall trend test with tie-corrected variance, Benjamini-Hochberg
//! FDR control, and the one-sample χ² variance test.
//!
//! Normal and χ² CDFs come from `statrs` (error-function and regularized
//! incomplete-gamma implementations); the test suite checks them against an
//! independent series/continued-fraction evaluation.

pub mod report;

use crate::model_io::LanguageProfile;
use crate::signatures::SignatureTable;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    None,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Increasing => write!(f, "increasing"),
            Direction::Decreasing => write!(f, "decreasing"),
            Direction::None => write!(f, "none"),
        }
    }
}

/// Result of one Mann-Kendall test.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendResult {
    pub group_id: String,
    pub s_statistic: i64,
    pub z_score: f64,
    pub p_value: f64,
    pub direction: Direction,
}

/// Result of the one-sample χ² variance test.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTestResult {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub sample_variance: f64,
    pub reference_variance: f64,
}

/// Which tail(s) of the χ² distribution count as evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    #[default]
    TwoSided,
    Lower,
    Upper,
}

/// A trend test with its FDR-adjusted p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedTrend {
    pub trend: TrendResult,
    pub p_adjusted: f64,
}

/// Outcome of [`layer_trend_analysis`]: per-group results plus the groups
/// that had to be skipped.
#[derive(Debug, Clone, Default)]
pub struct TrendAnalysis {
    pub results: Vec<AdjustedTrend>,
    pub skipped: Vec<SkippedGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedGroup {
    pub group_id: String,
    pub reason: String,
}

/// A Pearson correlation along with the number of paired points behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
}

/// The per-group corpus property a signature can be correlated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageProperty {
    UniqueChars,
    Ttr,
    DataSize,
}

impl LanguageProperty {
    pub fn value(self, profile: &LanguageProfile) -> f64 {
        match self {
            LanguageProperty::UniqueChars => profile.unique_chars as f64,
            LanguageProperty::Ttr => profile.ttr,
            LanguageProperty::DataSize => profile.data_size as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LanguageProperty::UniqueChars => "unique_chars",
            LanguageProperty::Ttr => "ttr",
            LanguageProperty::DataSize => "data_size",
        }
    }
}

impl std::str::FromStr for LanguageProperty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unique_chars" => Ok(Self::UniqueChars),
            "ttr" => Ok(Self::Ttr),
            "data_size" => Ok(Self::DataSize),
            other => Err(format!("unknown property {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("vectors have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input vector is constant")]
    ConstantInput,
    #[error("all values tied: the trend statistic has zero variance")]
    ZeroVariance,
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("FDR level q = {0} outside (0, 1)")]
    InvalidQ(f64),
    #[error("reference variance must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("no profile for group {0:?}")]
    MissingProfile(String),
    #[error("category {0:?} has no layer data")]
    EmptyCategory(String),
    #[error("report: {0}")]
    Report(String),
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewPoints {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(ss / (values.len() - 1) as f64)
}

/// Sample Pearson correlation coefficient, clamped into [−1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints {
            needed: 3,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Mann-Kendall monotone-trend test with tie-corrected variance and the
/// continuity-corrected normal approximation.
///
/// `alpha` only affects the reported direction; the raw statistics and
/// p-value are unconditional.
pub fn mann_kendall(series: &[f64], alpha: f64) -> Result<TrendResult, StatsError> {
    let n = series.len();
    if n < 4 {
        return Err(StatsError::TooFewPoints { needed: 4, got: n });
    }

    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += match series[j].partial_cmp(&series[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }

    let var = mann_kendall_variance(series)?;
    let z = if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let p = 2.0 * (1.0 - standard_normal().cdf(z.abs()));
    let direction = if p < alpha {
        if s > 0 {
            Direction::Increasing
        } else {
            Direction::Decreasing
        }
    } else {
        Direction::None
    };

    Ok(TrendResult {
        group_id: String::new(),
        s_statistic: s,
        z_score: z,
        p_value: p.clamp(0.0, 1.0),
        direction,
    })
}

/// Tie-corrected variance of the Mann-Kendall S statistic:
/// `[n(n−1)(2n+5) − Σ_t t(t−1)(2t+5)] / 18` over tie-group sizes t.
pub fn mann_kendall_variance(series: &[f64]) -> Result<f64, StatsError> {
    let n = series.len() as f64;
    let mut ties: BTreeMap<u64, u64> = BTreeMap::new();
    for v in series {
        *ties.entry(v.to_bits()).or_insert(0) += 1;
    }
    let tie_term: f64 = ties
        .values()
        .map(|&t| {
            let t = t as f64;
            t * (t - 1.0) * (2.0 * t + 5.0)
        })
        .sum();
    let var = (n * (n - 1.0) * (2.0 * n + 5.0) - tie_term) / 18.0;
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(var)
}

/// Outcome of the Benjamini-Hochberg step-up procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct BhOutcome {
    /// Whether each input hypothesis is rejected, in input order.
    pub rejected: Vec<bool>,
    /// BH-adjusted p-values, in input order.
    pub adjusted: Vec<f64>,
}

/// Benjamini-Hochberg FDR control at level `q`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<BhOutcome, StatsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(StatsError::InvalidQ(q));
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(StatsError::InvalidP(p));
        }
    }
    let m = p_values.len();
    if m == 0 {
        return Ok(BhOutcome {
            rejected: vec![],
            adjusted: vec![],
        });
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .partial_cmp(&p_values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    // Largest i (1-based) with p_(i) ≤ (i/m)·q.
    let mut cutoff = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if p_values[idx] <= (rank + 1) as f64 / m as f64 * q {
            cutoff = rank + 1;
        }
    }

    let mut rejected = vec![false; m];
    for &idx in order.iter().take(cutoff) {
        rejected[idx] = true;
    }

    // adjusted_(i) = min_{j ≥ i} min(1, m·p_(j)/j), walked from the tail.
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let candidate = (m as f64 * p_values[idx] / (rank + 1) as f64).min(1.0);
        running = running.min(candidate);
        adjusted[idx] = running;
    }

    Ok(BhOutcome { rejected, adjusted })
}

/// One-sample χ² variance test of `sample` against a reference variance,
/// two-sided by default.
pub fn chi_square_variance(
    sample: &[f64],
    reference_variance: f64,
) -> Result<VarianceTestResult, StatsError> {
    chi_square_variance_tailed(sample, reference_variance, Tail::TwoSided)
}

pub fn chi_square_variance_tailed(
    sample: &[f64],
    reference_variance: f64,
    tail: Tail,
) -> Result<VarianceTestResult, StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::TooFewPoints {
            needed: 2,
            got: sample.len(),
        });
    }
    if !(reference_variance > 0.0) {
        return Err(StatsError::NonPositiveReference(reference_variance));
    }
    let df = sample.len() - 1;
    let s2 = sample_variance(sample)?;
    let chi2 = df as f64 * s2 / reference_variance;
    let dist = ChiSquared::new(df as f64).expect("positive df");
    let lower = dist.cdf(chi2);
    let p = match tail {
        Tail::TwoSided => 2.0 * lower.min(1.0 - lower),
        Tail::Lower => lower,
        Tail::Upper => 1.0 - lower,
    };
    Ok(VarianceTestResult {
        chi2,
        df,
        p_value: p.clamp(0.0, 1.0),
        sample_variance: s2,
        reference_variance,
    })
}

/// Runs Mann-Kendall per group over its condensed signatures ordered by
/// layer, then applies BH-FDR across the per-group p-values; directions come
/// from the adjusted p-values at level `q`.
///
/// Groups missing any layer of the category (or whose series is degenerate)
/// are skipped and reported.
pub fn layer_trend_analysis(
    table: &SignatureTable,
    category: &str,
    alpha: f64,
    q: f64,
) -> Result<TrendAnalysis, StatsError> {
    let layers: Vec<usize> = table.layers().to_vec();
    if layers.len() < 4 {
        return Err(StatsError::TooFewPoints {
            needed: 4,
            got: layers.len(),
        });
    }
    if !table.categories().iter().any(|c| c == category) {
        return Err(StatsError::EmptyCategory(category.to_string()));
    }

    let mut analysis = TrendAnalysis::default();
    let mut tested: Vec<TrendResult> = Vec::new();
    for group in table.groups() {
        let series: Vec<f64> = layers
            .iter()
            .filter_map(|&layer| table.get(group, layer, category))
            .map(|sig| sig.condensed)
            .collect();
        if series.len() < layers.len() {
            analysis.skipped.push(SkippedGroup {
                group_id: group.clone(),
                reason: format!("only {} of {} layers present", series.len(), layers.len()),
            });
            continue;
        }
        match mann_kendall(&series, alpha) {
            Ok(mut result) => {
                result.group_id = group.clone();
                tested.push(result);
            }
            Err(StatsError::ZeroVariance) => {
                analysis.skipped.push(SkippedGroup {
                    group_id: group.clone(),
                    reason: "all condensed values tied".into(),
                });
            }
            Err(other) => return Err(other),
        }
    }

    let p_values: Vec<f64> = tested.iter().map(|t| t.p_value).collect();
    let bh = bh_fdr(&p_values, q)?;
    for ((mut trend, &rejected), &p_adjusted) in
        tested.into_iter().zip(&bh.rejected).zip(&bh.adjusted)
    {
        trend.direction = if rejected {
            if trend.s_statistic > 0 {
                Direction::Increasing
            } else {
                Direction::Decreasing
            }
        } else {
            Direction::None
        };
        analysis.results.push(AdjustedTrend { trend, p_adjusted });
    }
    Ok(analysis)
}

fn paired_condensed<'a>(
    table: &'a SignatureTable,
    layer: usize,
    category: &str,
) -> Vec<(&'a str, f64)> {
    table
        .groups()
        .iter()
        .filter_map(|g| {
            table
                .get(g, layer, category)
                .map(|sig| (g.as_str(), sig.condensed))
        })
        .collect()
}

/// Pearson correlation between condensed signatures at (layer, category) and
/// a per-group corpus property.
pub fn property_correlation(
    table: &SignatureTable,
    profiles: &BTreeMap<String, LanguageProfile>,
    property: LanguageProperty,
    layer: usize,
    category: &str,
) -> Result<Correlation, StatsError> {
    let cells = paired_condensed(table, layer, category);
    let mut sig_values = Vec::with_capacity(cells.len());
    let mut prop_values = Vec::with_capacity(cells.len());
    for (group, condensed) in cells {
        let profile = profiles
            .get(group)
            .ok_or_else(|| StatsError::MissingProfile(group.to_string()))?;
        sig_values.push(condensed);
        prop_values.push(property.value(profile));
    }
    let r = pearson(&sig_values, &prop_values)?;
    Ok(Correlation {
        r,
        n: sig_values.len(),
    })
}

/// Pearson correlation between condensed signatures at (layer, category) and
/// externally supplied per-group scores. Groups without a score are skipped.
pub fn external_score_correlation(
    table: &SignatureTable,
    scores: &BTreeMap<String, f64>,
    layer: usize,
    category: &str,
) -> Result<Correlation, StatsError> {
    let mut sig_values = Vec::new();
    let mut score_values = Vec::new();
    for (group, condensed) in paired_condensed(table, layer, category) {
        if let Some(&score) = scores.get(group) {
            sig_values.push(condensed);
            score_values.push(score);
        }
    }
    let r = pearson(&sig_values, &score_values)?;
    Ok(Correlation {
        r,
        n: sig_values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signatures::Signature;

    fn table_from(cells: &[(&str, usize, &str, f64)]) -> SignatureTable {
        let mut table = SignatureTable::new();
        for &(group, layer, category, condensed) in cells {
            table
                .insert(Signature {
                    group_id: group.into(),
                    layer,
                    category: category.into(),
                    values: vec![condensed],
                    condensed,
                })
                .unwrap();
        }
        table
    }

    #[test]
    fn pearson_detects_perfect_linear_relations() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_rejects_bad_input() {
        match pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]) {
            Err(StatsError::LengthMismatch { left: 2, right: 3 }) => {}
            other => panic!("expected LengthMismatch, got {other:?}"),
        }
        match pearson(&[1.0, 2.0], &[1.0, 2.0]) {
            Err(StatsError::TooFewPoints { needed: 3, got: 2 }) => {}
            other => panic!("expected TooFewPoints, got {other:?}"),
        }
        match pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]) {
            Err(StatsError::ConstantInput) => {}
            other => panic!("expected ConstantInput, got {other:?}"),
        }
    }

    #[test]
    fn pearson_is_affine_invariant() {
        let x = [0.3, -1.0, 2.5, 0.8, -0.2];
        let y = [1.1, 0.4, -0.7, 2.0, 0.9];
        let base = pearson(&x, &y).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| 3.0 * v + 11.0).collect();
        assert!((pearson(&shifted, &y).unwrap() - base).abs() < 1e-12);
        let flipped: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        assert!((pearson(&flipped, &y).unwrap() + base).abs() < 1e-12);
    }

    #[test]
    fn mann_kendall_counts_concordant_pairs() {
        let r = mann_kendall(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.05).unwrap();
        assert_eq!(r.s_statistic, 10);
        assert_eq!(r.direction, Direction::Increasing);
    }

    #[test]
    fn mann_kendall_matches_the_hand_computed_decreasing_case() {
        // S = −10, Var = 50/3, Z = −9/√(50/3) ≈ −2.2045, p ≈ 0.0275.
        let r = mann_kendall(&[5.0, 4.0, 3.0, 2.0, 1.0], 0.05).unwrap();
        assert_eq!(r.s_statistic, -10);
        assert!((r.z_score - (-9.0 / (50.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((r.p_value - 0.0275).abs() < 5e-4);
        assert_eq!(r.direction, Direction::Decreasing);
    }

    #[test]
    fn mann_kendall_rejects_degenerate_series() {
        match mann_kendall(&[2.0, 2.0, 2.0, 2.0, 2.0], 0.05) {
            Err(StatsError::ZeroVariance) => {}
            other => panic!("expected ZeroVariance, got {other:?}"),
        }
        match mann_kendall(&[1.0, 2.0, 3.0], 0.05) {
            Err(StatsError::TooFewPoints { needed: 4, got: 3 }) => {}
            other => panic!("expected TooFewPoints, got {other:?}"),
        }
    }

    #[test]
    fn mann_kendall_s_is_antisymmetric_and_rank_based() {
        let series = [0.4, 1.9, -0.3, 0.4, 2.2, 0.1, -1.0];
        let forward = mann_kendall(&series, 0.05).unwrap();
        let mut reversed = series;
        reversed.reverse();
        let backward = mann_kendall(&reversed, 0.05).unwrap();
        assert_eq!(forward.s_statistic, -backward.s_statistic);

        // Applying a monotone transform preserves S.
        let squashed: Vec<f64> = series.iter().map(|v| v.tanh()).collect();
        let transformed = mann_kendall(&squashed, 0.05).unwrap();
        assert_eq!(forward.s_statistic, transformed.s_statistic);
    }

    #[test]
    fn bh_fdr_matches_step_up_hand_computations() {
        let all = bh_fdr(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        assert_eq!(all.rejected, vec![true; 4]);

        let none = bh_fdr(&[0.04, 0.5, 0.9], 0.05).unwrap();
        assert_eq!(none.rejected, vec![false; 3]);

        let single = bh_fdr(&[0.04], 0.05).unwrap();
        assert_eq!(single.rejected, vec![true]);
    }

    #[test]
    fn bh_fdr_validates_inputs() {
        match bh_fdr(&[0.5], 1.5) {
            Err(StatsError::InvalidQ(_)) => {}
            other => panic!("expected InvalidQ, got {other:?}"),
        }
        match bh_fdr(&[1.5], 0.05) {
            Err(StatsError::InvalidP(_)) => {}
            other => panic!("expected InvalidP, got {other:?}"),
        }
    }

    #[test]
    fn bh_adjusted_values_are_monotone_in_the_sorted_order() {
        let p = [0.001, 0.008, 0.039, 0.041, 0.042, 0.06, 0.074, 0.205];
        let out = bh_fdr(&p, 0.05).unwrap();
        let mut sorted: Vec<(f64, f64)> =
            p.iter().copied().zip(out.adjusted.iter().copied()).collect();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in sorted.windows(2) {
            assert!(w[0].1 <= w[1].1 + 1e-15);
        }
        for (&raw, &adj) in p.iter().zip(&out.adjusted) {
            assert!(adj >= raw - 1e-15);
            assert!(adj <= 1.0);
        }
    }

    #[test]
    fn chi_square_agrees_with_reference_values() {
        // Unit-variance sample with s² = σ₀², n = 11: consistent with null.
        let sample: Vec<f64> = vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 0.0];
        let s2 = sample_variance(&sample).unwrap();
        let r = chi_square_variance(&sample, s2).unwrap();
        assert_eq!(r.df, 10);
        assert!((r.chi2 - 10.0).abs() < 1e-12);
        assert!(r.p_value > 0.8, "null case p = {}", r.p_value);

        // Doubled variance: chi2 = 20, df = 10, two-sided p ≈ 0.0586.
        let r = chi_square_variance(&sample, s2 / 2.0).unwrap();
        assert!((r.chi2 - 20.0).abs() < 1e-12);
        assert!((r.p_value - 0.0586).abs() < 5e-4, "p = {}", r.p_value);
    }

    #[test]
    fn chi_square_invariant_chi2_equals_df_times_ratio() {
        let sample = [0.2, 1.4, -0.6, 0.9, 2.2];
        let r = chi_square_variance(&sample, 0.7).unwrap();
        assert!((r.chi2 - r.df as f64 * r.sample_variance / r.reference_variance).abs() < 1e-12);
    }

    #[test]
    fn chi_square_p_is_invariant_under_common_rescaling() {
        let sample = [0.2, 1.4, -0.6, 0.9, 2.2, -1.3];
        let base = chi_square_variance(&sample, 0.9).unwrap();
        let scaled: Vec<f64> = sample.iter().map(|v| v * 3.0).collect();
        let rescaled = chi_square_variance(&scaled, 0.9 * 9.0).unwrap();
        assert!((base.p_value - rescaled.p_value).abs() < 1e-12);
    }

    #[test]
    fn chi_square_rejects_bad_input() {
        match chi_square_variance(&[1.0], 1.0) {
            Err(StatsError::TooFewPoints { needed: 2, got: 1 }) => {}
            other => panic!("expected TooFewPoints, got {other:?}"),
        }
        match chi_square_variance(&[1.0, 2.0], 0.0) {
            Err(StatsError::NonPositiveReference(_)) => {}
            other => panic!("expected NonPositiveReference, got {other:?}"),
        }
    }

    #[test]
    fn trend_analysis_flags_designed_trends() {
        let mut cells = Vec::new();
        for group in ["a", "b", "c"] {
            for layer in 0..6 {
                cells.push((group, layer, "ALL", 1.0 + layer as f64 * 0.5));
            }
        }
        let cells: Vec<(&str, usize, &str, f64)> = cells;
        let table = table_from(&cells);
        let analysis = layer_trend_analysis(&table, "ALL", 0.05, 0.05).unwrap();
        assert_eq!(analysis.results.len(), 3);
        for r in &analysis.results {
            assert_eq!(r.trend.direction, Direction::Increasing);
        }
    }

    #[test]
    fn trend_analysis_skips_groups_with_missing_layers() {
        let mut cells = vec![];
        for layer in 0..5 {
            cells.push(("full", layer, "ALL", 5.0 - layer as f64));
        }
        for layer in 0..3 {
            cells.push(("gappy", layer, "ALL", 1.0 + layer as f64));
        }
        let table = table_from(&cells);
        let analysis = layer_trend_analysis(&table, "ALL", 0.05, 0.05).unwrap();
        assert_eq!(analysis.results.len(), 1);
        assert_eq!(analysis.skipped.len(), 1);
        assert_eq!(analysis.skipped[0].group_id, "gappy");
    }

    #[test]
    fn single_group_analysis_reduces_to_raw_mann_kendall() {
        let cells: Vec<(&str, usize, &str, f64)> = (0..7)
            .map(|layer| ("only", layer, "ALL", 9.0 - layer as f64))
            .collect();
        let table = table_from(&cells);
        let analysis = layer_trend_analysis(&table, "ALL", 0.05, 0.05).unwrap();
        let series: Vec<f64> = (0..7).map(|layer| 9.0 - layer as f64).collect();
        let raw = mann_kendall(&series, 0.05).unwrap();
        let got = &analysis.results[0];
        assert_eq!(got.trend.s_statistic, raw.s_statistic);
        assert!((got.p_adjusted - raw.p_value).abs() < 1e-15);
        assert_eq!(got.trend.direction, raw.direction);
    }

    #[test]
    fn property_correlation_recovers_exact_linear_plants() {
        let groups = ["a", "b", "c", "d"];
        let chars = [10usize, 20, 30, 40];
        let mut cells = Vec::new();
        let mut profiles = BTreeMap::new();
        for (g, &u) in groups.iter().zip(&chars) {
            cells.push((*g, 0usize, "ALL", -0.1 * u as f64 + 5.0));
            profiles.insert(
                g.to_string(),
                LanguageProfile {
                    group_id: g.to_string(),
                    unique_chars: u,
                    ttr: 0.5,
                    data_size: 100,
                },
            );
        }
        let table = table_from(&cells);
        let c = property_correlation(&table, &profiles, LanguageProperty::UniqueChars, 0, "ALL")
            .unwrap();
        assert!((c.r + 1.0).abs() < 1e-12);
        assert_eq!(c.n, 4);

        // A constant property cannot be correlated.
        match property_correlation(&table, &profiles, LanguageProperty::Ttr, 0, "ALL") {
            Err(StatsError::ConstantInput) => {}
            other => panic!("expected ConstantInput, got {other:?}"),
        }
    }

    #[test]
    fn property_correlation_requires_profiles() {
        let cells = [("a", 0usize, "ALL", 1.0), ("b", 0, "ALL", 2.0), ("c", 0, "ALL", 3.0)];
        let table = table_from(&cells);
        let profiles = BTreeMap::new();
        match property_correlation(&table, &profiles, LanguageProperty::Ttr, 0, "ALL") {
            Err(StatsError::MissingProfile(g)) => assert_eq!(g, "a"),
            other => panic!("expected MissingProfile, got {other:?}"),
        }
    }

    #[test]
    fn external_scores_identical_to_signatures_correlate_perfectly() {
        let cells = [("a", 0usize, "ALL", 0.4), ("b", 0, "ALL", 0.9), ("c", 0, "ALL", 0.1)];
        let table = table_from(&cells);
        let scores: BTreeMap<String, f64> = [("a", 0.4), ("b", 0.9), ("c", 0.1)]
            .into_iter()
            .map(|(g, s)| (g.to_string(), s))
            .collect();
        let c = external_score_correlation(&table, &scores, 0, "ALL").unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
    }
}
