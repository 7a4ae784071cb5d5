//! Experiment driver: run a simulation to a stop rule, summarize it,
//! and aggregate across seeds.

use serde::Serialize;

use super::round::Simulation;
use crate::error::Result;

/// Everything observed in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// 1-based round number.
    pub round: u32,
    pub participants: u32,
    pub accuracy: f64,
    pub loss: f64,
    /// Mean over clients of the total squared quantization error.
    pub mean_quant_error: f64,
    pub tau_mean: f64,
    pub tau_max: f64,
    /// Per layer, how many clients picked each codebook.
    pub selection_histogram: Vec<Vec<u32>>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub cumulative_uplink_bytes: u64,
    pub cumulative_downlink_bytes: u64,
    pub weighted_total_cost: f64,
}

/// When to stop a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Run the full round budget regardless of accuracy.
    FixedRounds,
    /// Stop as soon as the target accuracy is reached (or the budget
    /// runs out).
    StopAtTarget,
}

/// End-of-run digest.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub strategy: String,
    pub seed: u64,
    pub rounds_run: u32,
    pub target_accuracy: Option<f64>,
    /// First round that reached the target; None encodes "never".
    pub rounds_to_target: Option<u32>,
    pub peak_accuracy: f64,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub cumulative_uplink_bytes: u64,
    pub cumulative_downlink_bytes: u64,
    pub weighted_total_cost: f64,
    /// Weighted cost accumulated by the round that reached the target.
    pub cost_at_target: Option<f64>,
}

/// A full run: the per-round series plus its summary.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub series: Vec<RoundMetrics>,
    pub summary: ExperimentSummary,
}

/// Drive `sim` until the stop rule fires.
pub fn run_experiment(sim: &mut Simulation, stop: StopRule) -> Result<ExperimentResult> {
    let budget = sim.config().rounds;
    let target = sim.config().target_accuracy;
    let mut series = Vec::with_capacity(budget);
    let mut rounds_to_target: Option<u32> = None;
    let mut cost_at_target: Option<f64> = None;

    for _ in 0..budget {
        let metrics = sim.run_round()?;
        let reached = target.is_some_and(|t| metrics.accuracy >= t);
        if reached && rounds_to_target.is_none() {
            rounds_to_target = Some(metrics.round);
            cost_at_target = Some(metrics.weighted_total_cost);
        }
        series.push(metrics);
        if reached && stop == StopRule::StopAtTarget {
            break;
        }
    }

    // A zero-round budget still yields a valid (header-only) series and
    // a summary of the untouched initial model.
    let summary = match series.last() {
        Some(last) => ExperimentSummary {
            strategy: sim.config().strategy.name().to_string(),
            seed: 0, // callers that know the master seed overwrite this
            rounds_run: last.round,
            target_accuracy: target,
            rounds_to_target,
            peak_accuracy: series.iter().map(|m| m.accuracy).fold(0.0f64, f64::max),
            final_accuracy: last.accuracy,
            final_loss: last.loss,
            cumulative_uplink_bytes: last.cumulative_uplink_bytes,
            cumulative_downlink_bytes: last.cumulative_downlink_bytes,
            weighted_total_cost: last.weighted_total_cost,
            cost_at_target,
        },
        None => {
            let (accuracy, loss) = sim.evaluate_current()?;
            ExperimentSummary {
                strategy: sim.config().strategy.name().to_string(),
                seed: 0,
                rounds_run: 0,
                target_accuracy: target,
                rounds_to_target: None,
                peak_accuracy: accuracy,
                final_accuracy: accuracy,
                final_loss: loss,
                cumulative_uplink_bytes: 0,
                cumulative_downlink_bytes: 0,
                weighted_total_cost: 0.0,
                cost_at_target: None,
            }
        }
    };
    Ok(ExperimentResult { series, summary })
}

/// Mean and standard deviation of rounds-to-target across seeds;
/// `None` when any seed never reached the target (the "infinite" row).
#[derive(Debug, Clone, Serialize)]
pub struct SeedAggregate {
    pub mean_rounds_to_target: Option<f64>,
    pub std_rounds_to_target: Option<f64>,
    pub mean_peak_accuracy: f64,
    pub mean_weighted_total_cost: f64,
    pub seeds: usize,
}

impl SeedAggregate {
    /// Rounds-to-target as a comparable number, infinity when any seed
    /// failed to converge.
    pub fn rounds_or_inf(&self) -> f64 {
        self.mean_rounds_to_target.unwrap_or(f64::INFINITY)
    }
}

pub fn aggregate_seeds(runs: &[ExperimentSummary]) -> SeedAggregate {
    let all_reached = !runs.is_empty() && runs.iter().all(|r| r.rounds_to_target.is_some());
    let (mean, std) = if all_reached {
        let vals: Vec<f64> = runs
            .iter()
            .map(|r| f64::from(r.rounds_to_target.unwrap()))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (Some(mean), Some(var.sqrt()))
    } else {
        (None, None)
    };
    SeedAggregate {
        mean_rounds_to_target: mean,
        std_rounds_to_target: std,
        mean_peak_accuracy: runs.iter().map(|r| r.peak_accuracy).sum::<f64>()
            / runs.len().max(1) as f64,
        mean_weighted_total_cost: runs.iter().map(|r| r.weighted_total_cost).sum::<f64>()
            / runs.len().max(1) as f64,
        seeds: runs.len(),
    }
}
