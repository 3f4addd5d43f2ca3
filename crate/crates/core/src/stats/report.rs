//! CSV report writers for the analysis outputs.

use super::{Correlation, StatsError, TrendAnalysis, VarianceTestResult};
use std::io::Write;

/// `group,category,S,Z,p,p_adjusted,direction`, one row per tested group,
/// then one `# skipped` comment line per skipped group.
pub fn write_trend_csv(
    analysis: &TrendAnalysis,
    category: &str,
    mut w: impl Write,
) -> Result<(), StatsError> {
    writeln!(w, "group,category,S,Z,p,p_adjusted,direction").map_err(io_err)?;
    for row in &analysis.results {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            row.trend.group_id,
            category,
            row.trend.s_statistic,
            row.trend.z_score,
            row.trend.p_value,
            row.p_adjusted,
            row.trend.direction
        )
        .map_err(io_err)?;
    }
    for skipped in &analysis.skipped {
        writeln!(w, "# skipped {}: {}", skipped.group_id, skipped.reason).map_err(io_err)?;
    }
    Ok(())
}

/// `property,layer,category,r,n`; `property` is a corpus property name or an
/// external task label.
pub fn write_correlation_csv_header(mut w: impl Write) -> Result<(), StatsError> {
    writeln!(w, "property,layer,category,r,n").map_err(io_err)
}

pub fn write_correlation_row(
    property: &str,
    layer: usize,
    category: &str,
    c: &Correlation,
    mut w: impl Write,
) -> Result<(), StatsError> {
    writeln!(w, "{},{},{},{},{}", property, layer, category, c.r, c.n).map_err(io_err)
}

/// `layer,category,chi2,df,p,sample_variance,reference_variance`.
pub fn write_variance_csv_header(mut w: impl Write) -> Result<(), StatsError> {
    writeln!(w, "layer,category,chi2,df,p,sample_variance,reference_variance").map_err(io_err)
}

pub fn write_variance_row(
    layer: usize,
    category: &str,
    r: &VarianceTestResult,
    mut w: impl Write,
) -> Result<(), StatsError> {
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        layer, category, r.chi2, r.df, r.p_value, r.sample_variance, r.reference_variance
    )
    .map_err(io_err)
}

fn io_err(e: std::io::Error) -> StatsError {
    StatsError::Report(e.to_string())
}
