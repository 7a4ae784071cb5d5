//! Round orchestration, baselines, byte accounting, and experiments.

pub mod baselines;
pub mod experiment;
pub mod ledger;
pub mod report;
pub mod round;

pub use experiment::{
    aggregate_seeds, run_experiment, ExperimentResult, ExperimentSummary, RoundMetrics,
    SeedAggregate, StopRule,
};
pub use ledger::{CommLedger, RoundComm};
pub use round::Simulation;

use crate::error::{Error, Result};

/// Which uplink compression runs on the client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Multi-codebook product quantization with pruned residuals and
    /// pseudo-centroid feedback.
    FedMpq,
    /// Single public-data codebook: identical pipeline with one
    /// codebook and no pseudo-centroid-derived codebooks.
    Spq,
    /// Per-layer min-max uniform quantization.
    ScalarQuant {
        bits: u8,
    },
    /// Top-k magnitude pruning of the raw update.
    TopK {
        ratio: f64,
    },
    Uncompressed,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FedMpq => "fedmpq",
            Strategy::Spq => "spq",
            Strategy::ScalarQuant { .. } => "scalar_quant",
            Strategy::TopK { .. } => "topk",
            Strategy::Uncompressed => "uncompressed",
        }
    }

    /// Product-quantization strategies share the packet pipeline.
    pub fn uses_codebooks(&self) -> bool {
        matches!(self, Strategy::FedMpq | Strategy::Spq)
    }
}

/// Per-round simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    /// Clients sampled per round.
    pub clients_per_round: usize,
    /// Codebooks per layer (M). Forced to 1 by the SPQ strategy.
    pub num_codebooks: usize,
    /// Codewords per codebook (K), a power of two.
    pub codebook_size: usize,
    /// Codeword length (D).
    pub subvector_len: usize,
    /// Residual upload ratio (rho).
    pub residual_ratio: f64,
    /// Pseudo-centroid EMA factor (gamma).
    pub ema_factor: f64,
    pub strategy: Strategy,
    /// Round budget.
    pub rounds: usize,
    /// Accuracy that stops the run (None = run out the budget).
    pub target_accuracy: Option<f64>,
    /// Build the first codebook from a public-data gradient.
    pub use_public_data: bool,
    /// Weight pseudo-centroid clustering by usage counts.
    pub weighted_clustering: bool,
    /// Optional cap on pseudo-centroids per clustering part.
    pub pseudo_subsample: Option<usize>,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            clients_per_round: 10,
            num_codebooks: 4,
            codebook_size: 16,
            subvector_len: 4,
            residual_ratio: 0.01,
            ema_factor: 0.99,
            strategy: Strategy::FedMpq,
            rounds: 30,
            target_accuracy: None,
            use_public_data: true,
            weighted_clustering: true,
            pseudo_subsample: None,
            kmeans_iters: 25,
            kmeans_tol: 1e-6,
        }
    }
}

impl RoundConfig {
    /// The codebook count after strategy normalization: SPQ always runs
    /// with a single public codebook.
    pub fn effective_codebooks(&self) -> usize {
        match self.strategy {
            Strategy::Spq => 1,
            _ => self.num_codebooks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients_per_round == 0 {
            return Err(Error::InvalidConfig(
                "clients_per_round must be >= 1".into(),
            ));
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(
                    "target accuracy must be in [0, 1]".into(),
                ));
            }
        }
        if self.strategy.uses_codebooks() {
            if self.num_codebooks == 0 || self.num_codebooks > 255 {
                return Err(Error::InvalidConfig(
                    "codebook count must be in [1, 255]".into(),
                ));
            }
            if self.codebook_size == 0 || !self.codebook_size.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "codebook size must be a power of two, got {}",
                    self.codebook_size
                )));
            }
            if self.subvector_len == 0 {
                return Err(Error::InvalidConfig("subvector length must be >= 1".into()));
            }
            if !(0.0..=1.0).contains(&self.residual_ratio) {
                return Err(Error::InvalidConfig(
                    "residual ratio must be in [0, 1]".into(),
                ));
            }
            if !(self.ema_factor > 0.0 && self.ema_factor <= 1.0) {
                return Err(Error::InvalidConfig("EMA factor must be in (0, 1]".into()));
            }
            if self.kmeans_iters == 0 || self.kmeans_tol < 0.0 {
                return Err(Error::InvalidConfig("k-means settings invalid".into()));
            }
        }
        match self.strategy {
            Strategy::ScalarQuant { bits } if !(1..=16).contains(&bits) => Err(
                Error::InvalidConfig("scalar quantization bits must be in [1, 16]".into()),
            ),
            Strategy::TopK { ratio } if !(ratio > 0.0 && ratio <= 1.0) => {
                Err(Error::InvalidConfig("top-k ratio must be in (0, 1]".into()))
            }
            _ => Ok(()),
        }
    }
}
