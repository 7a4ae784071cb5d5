//! Metrics CSV and summary JSON emission.
//!
//! The CSV carries one row per round. Selection histograms are encoded
//! per layer as `|`-joined counts with `;` between layers, e.g.
//! `3|17;20|0` for two layers of two codebooks. Summaries serialize
//! straight from [`ExperimentSummary`]; an unreached target appears as
//! `null` in JSON and `inf` in CSV-adjacent text.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::{ExperimentSummary, RoundMetrics};
use crate::error::Result;

pub const METRICS_CSV_HEADER: &str = "round,participants,accuracy,loss,mean_quant_error,tau_mean,tau_max,uplink_bytes,downlink_bytes,cumulative_uplink_bytes,cumulative_downlink_bytes,weighted_total_cost,codebook_selections";

fn histogram_field(hist: &[Vec<u32>]) -> String {
    hist.iter()
        .map(|layer| {
            layer
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Render the per-round series as CSV text (header always present).
pub fn metrics_csv(series: &[RoundMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in series {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.round,
            m.participants,
            m.accuracy,
            m.loss,
            m.mean_quant_error,
            m.tau_mean,
            m.tau_max,
            m.uplink_bytes,
            m.downlink_bytes,
            m.cumulative_uplink_bytes,
            m.cumulative_downlink_bytes,
            m.weighted_total_cost,
            histogram_field(&m.selection_histogram),
        );
    }
    out
}

pub fn write_metrics_csv(path: &Path, series: &[RoundMetrics]) -> Result<()> {
    fs::write(path, metrics_csv(series))?;
    Ok(())
}

pub fn summary_json(summary: &ExperimentSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

pub fn write_summary_json(path: &Path, summary: &ExperimentSummary) -> Result<()> {
    fs::write(path, summary_json(summary))?;
    Ok(())
}
