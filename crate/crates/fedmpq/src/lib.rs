//! Communication-efficient federated learning with multi-codebook
//! product quantization.
//!
//! Clients compress model updates by quantizing subvectors against a
//! set of shared codebooks, keep the best codebook per layer, prune the
//! leftover residual, and upload compact packets together with
//! pseudo-centroids. An aggregator accumulates packets in the
//! compressed domain so no party ever sees an individual update, and
//! the server regenerates codebooks each round from a public-data
//! gradient plus the pooled pseudo-centroids. A desk-scale simulator
//! drives the whole loop on synthetic non-IID federations and accounts
//! for every byte moved.

pub mod codebooks;
pub mod error;
pub mod learning;
pub mod pq;
pub mod secure_agg;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
