//! Pseudo-centroid extraction.
//!
//! After quantizing an update, a client nudges each used codeword toward
//! the mean of the subvectors assigned to it (an exponential moving
//! average with factor `ema_factor`) and uploads the top half of
//! codewords by usage. The server clusters these uploads to regenerate
//! codebooks without ever seeing raw updates. The client's own codebook
//! copy is left untouched; the update exists only in the upload.

use super::codebook::Codebook;
use super::quantize::QuantizationCode;
use crate::error::{Error, Result};

/// The half-codebook a client uploads: EMA-updated codewords ordered by
/// descending usage count, with the counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCentroidSet {
    pub layer_id: u16,
    pub source_codebook_index: u8,
    /// floor(K/2) centroids, flattened row-major.
    pub centroids: Vec<f32>,
    pub usage_counts: Vec<u32>,
    pub subvector_len: usize,
}

impl PseudoCentroidSet {
    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.subvector_len..(i + 1) * self.subvector_len]
    }

    pub fn len(&self) -> usize {
        self.usage_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.usage_counts.is_empty()
    }
}

/// Compute the pseudo-centroids for one quantized layer.
///
/// Codewords with at least one assigned subvector move to
/// `codeword * (1 - ema_factor) + ema_factor * mean(assigned)`; unused
/// codewords stay put with usage 0. The floor(K/2) codewords with the
/// highest usage (ties: lowest codeword index) are returned.
pub fn update_pseudo_centroids(
    cb: &Codebook,
    code: &QuantizationCode,
    subvectors: &[Vec<f32>],
    ema_factor: f64,
) -> Result<PseudoCentroidSet> {
    if !(ema_factor > 0.0 && ema_factor <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "EMA factor must be in (0, 1], got {ema_factor}"
        )));
    }
    if code.codebook_index != cb.index() {
        return Err(Error::CorruptCode(
            "code was not produced against this codebook".into(),
        ));
    }
    if code.codes.len() != subvectors.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} codes but {} subvectors",
            code.codes.len(),
            subvectors.len()
        )));
    }
    let k = cb.codebook_size();
    let d = cb.subvector_len();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0u32; k];
    for (&c, sub) in code.codes.iter().zip(subvectors) {
        let c = usize::from(c);
        if c >= k {
            return Err(Error::CorruptCode(format!("code {c} out of range")));
        }
        if sub.len() != d {
            return Err(Error::ShapeMismatch(
                "subvector length differs from codeword".into(),
            ));
        }
        counts[c] += 1;
        for (acc, &v) in sums[c * d..(c + 1) * d].iter_mut().zip(sub) {
            *acc += f64::from(v);
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let half = k / 2;

    let mut centroids = Vec::with_capacity(half * d);
    let mut usage = Vec::with_capacity(half);
    for &i in order.iter().take(half) {
        let cw = cb.codeword(i);
        if counts[i] == 0 {
            centroids.extend_from_slice(cw);
        } else {
            let n = f64::from(counts[i]);
            for (j, &c) in cw.iter().enumerate() {
                let mean = sums[i * d + j] / n;
                centroids.push((f64::from(c) * (1.0 - ema_factor) + ema_factor * mean) as f32);
            }
        }
        usage.push(counts[i]);
    }

    Ok(PseudoCentroidSet {
        layer_id: cb.layer_id(),
        source_codebook_index: cb.index(),
        centroids,
        usage_counts: usage,
        subvector_len: d,
    })
}
