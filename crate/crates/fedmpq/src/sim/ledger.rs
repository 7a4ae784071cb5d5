//! Byte accounting per round.
//!
//! Downlink bandwidth is typically several times uplink bandwidth, so
//! the weighted total charges downlink at one eighth:
//! `total = downlink / 8 + uplink`.

/// Bytes moved in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundComm {
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CommLedger {
    rounds: Vec<RoundComm>,
    cum_uplink: u64,
    cum_downlink: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, uplink_bytes: u64, downlink_bytes: u64) {
        self.rounds.push(RoundComm {
            uplink_bytes,
            downlink_bytes,
        });
        self.cum_uplink += uplink_bytes;
        self.cum_downlink += downlink_bytes;
    }

    pub fn rounds(&self) -> &[RoundComm] {
        &self.rounds
    }

    pub fn cumulative_uplink(&self) -> u64 {
        self.cum_uplink
    }

    pub fn cumulative_downlink(&self) -> u64 {
        self.cum_downlink
    }

    /// `downlink / 8 + uplink`. Division by 8 is exact in f64.
    pub fn weighted_total(&self) -> f64 {
        self.cum_downlink as f64 / 8.0 + self.cum_uplink as f64
    }
}
