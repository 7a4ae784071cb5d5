//! Multi-codebook product quantization of layer updates.
//!
//! The client-side compression path: split an update into subvectors,
//! quantize against each of the layer's codebooks and keep the best,
//! prune the leftover residual, extract pseudo-centroids, and serialize
//! the lot into a compact packet.

pub mod codebook;
pub mod packing;
pub mod pseudo;
pub mod quantize;
pub mod residual;
pub mod wire;

pub use codebook::Codebook;
pub use pseudo::{update_pseudo_centroids, PseudoCentroidSet};
pub use quantize::{
    dequantize, grouped_norm_sq, quantize_best, quantize_with_codebook, split_subvectors,
    ContractionReport, QuantizationCode, Quantized,
};
pub use residual::{prune_residual, SparseResidual};
pub use wire::{ClientUpdatePacket, LayerGeometry, LayerUpdate};
