//! Nearest-codeword quantization and reconstruction.
//!
//! A layer update of length `L` is cut into subvectors of length `D`
//! (the last one zero-padded), each subvector is replaced by the index
//! of its nearest codeword, and reconstruction concatenates the chosen
//! codewords and drops the padding again. Distances are accumulated in
//! f64 and the reported squared error is the sum of the chosen
//! per-subvector distances restricted to real (non-pad) positions, so
//! the contraction bound `error <= input norm` holds exactly in floating
//! point whenever the codebook contains the zero codeword.

use super::codebook::Codebook;
use crate::error::{Error, Result};

/// The quantization result for one layer against one codebook: one
/// 0-based codeword index per subvector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizationCode {
    pub layer_id: u16,
    /// Which codebook of the layer's set produced the codes (0-based).
    pub codebook_index: u8,
    /// One codeword index per subvector, 0-based.
    pub codes: Vec<u16>,
    /// Length of the vector before padding.
    pub original_len: u32,
    /// Zeros appended to fill the final subvector.
    pub pad_count: u16,
}

/// Outcome of quantizing one vector: codes, the reconstruction, and the
/// squared reconstruction error over the unpadded positions.
#[derive(Debug, Clone)]
pub struct Quantized {
    pub code: QuantizationCode,
    pub reconstruction: Vec<f32>,
    pub squared_error: f64,
}

/// Norm bookkeeping for one quantization, with the observed contraction
/// factor `error_norm / input_norm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub input_norm: f64,
    pub error_norm: f64,
    pub tau_observed: f64,
}

impl ContractionReport {
    pub fn new(input_norm_sq: f64, error_norm_sq: f64) -> Self {
        let input_norm = input_norm_sq.sqrt();
        let error_norm = error_norm_sq.sqrt();
        let tau_observed = if input_norm > 0.0 {
            error_norm / input_norm
        } else {
            0.0
        };
        Self {
            input_norm,
            error_norm,
            tau_observed,
        }
    }
}

/// Split `z` into subvectors of length `subvector_len`, zero-padding the
/// final one. Returns the subvectors and the pad count.
pub fn split_subvectors(z: &[f32], subvector_len: usize) -> Result<(Vec<Vec<f32>>, usize)> {
    if z.is_empty() {
        return Err(Error::EmptyVector);
    }
    if subvector_len == 0 {
        return Err(Error::InvalidConfig("subvector length must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(z.len().div_ceil(subvector_len));
    for chunk in z.chunks(subvector_len) {
        let mut v = chunk.to_vec();
        v.resize(subvector_len, 0.0);
        out.push(v);
    }
    let pad = out.len() * subvector_len - z.len();
    Ok((out, pad))
}

/// Squared L2 norm of `z` accumulated subvector-by-subvector, matching
/// the grouping used for quantization errors. Within each group and
/// across groups the f64 additions are order-matched with
/// [`quantize_with_codebook`], so comparisons against its
/// `squared_error` are exact.
pub fn grouped_norm_sq(z: &[f32], subvector_len: usize) -> f64 {
    let mut total = 0.0f64;
    for chunk in z.chunks(subvector_len) {
        let mut s = 0.0f64;
        for &v in chunk {
            let v = f64::from(v);
            s += v * v;
        }
        total += s;
    }
    total
}

/// Distance of a (possibly short, implicitly zero-padded) chunk to a
/// codeword: full padded distance for the argmin, plus the partial
/// distance over real positions for error reporting.
fn chunk_distances(chunk: &[f32], codeword: &[f32]) -> (f64, f64) {
    let mut partial = 0.0f64;
    for (&z, &c) in chunk.iter().zip(codeword) {
        let diff = f64::from(z) - f64::from(c);
        partial += diff * diff;
    }
    let mut padded = partial;
    for &c in &codeword[chunk.len()..] {
        let c = f64::from(c);
        padded += c * c;
    }
    (padded, partial)
}

/// Quantize `z` against a single codebook. Each subvector maps to the
/// nearest codeword (ties: lowest index).
pub fn quantize_with_codebook(z: &[f32], cb: &Codebook) -> Result<Quantized> {
    if z.is_empty() {
        return Err(Error::EmptyVector);
    }
    let d = cb.subvector_len();
    let mut codes = Vec::with_capacity(z.len().div_ceil(d));
    let mut reconstruction = Vec::with_capacity(z.len());
    let mut squared_error = 0.0f64;

    for chunk in z.chunks(d) {
        let mut best = 0usize;
        let mut best_padded = f64::INFINITY;
        let mut best_partial = f64::INFINITY;
        for (i, cw) in cb.codewords().enumerate() {
            let (padded, partial) = chunk_distances(chunk, cw);
            if padded < best_padded {
                best_padded = padded;
                best_partial = partial;
                best = i;
            }
        }
        codes.push(best as u16);
        squared_error += best_partial;
        reconstruction.extend_from_slice(&cb.codeword(best)[..chunk.len()]);
    }

    let pad = codes.len() * d - z.len();
    Ok(Quantized {
        code: QuantizationCode {
            layer_id: cb.layer_id(),
            codebook_index: cb.index(),
            codes,
            original_len: z.len() as u32,
            pad_count: pad as u16,
        },
        reconstruction,
        squared_error,
    })
}

/// Quantize `z` against every codebook of a layer's set and keep the one
/// with the smallest squared error (ties: lowest codebook index).
pub fn quantize_best(z: &[f32], codebooks: &[Codebook]) -> Result<Quantized> {
    if codebooks.is_empty() {
        return Err(Error::EmptyCodebookList);
    }
    let (k, d) = (codebooks[0].codebook_size(), codebooks[0].subvector_len());
    for (i, cb) in codebooks.iter().enumerate() {
        if cb.codebook_size() != k || cb.subvector_len() != d {
            return Err(Error::SchemaMismatch(
                "codebooks in a set must share size and subvector length".into(),
            ));
        }
        if cb.index() as usize != i {
            return Err(Error::SchemaMismatch(format!(
                "codebook at position {i} carries index {}",
                cb.index()
            )));
        }
    }
    let mut best: Option<Quantized> = None;
    for cb in codebooks {
        let q = quantize_with_codebook(z, cb)?;
        let better = match &best {
            None => true,
            Some(b) => q.squared_error < b.squared_error,
        };
        if better {
            best = Some(q);
        }
    }
    Ok(best.expect("nonempty codebook list"))
}

/// Reconstruct a vector from its codes: concatenated codewords truncated
/// to the original length.
pub fn dequantize(code: &QuantizationCode, cb: &Codebook) -> Result<Vec<f32>> {
    if code.codebook_index != cb.index() {
        return Err(Error::CorruptCode(format!(
            "code targets codebook {}, got codebook {}",
            code.codebook_index,
            cb.index()
        )));
    }
    let d = cb.subvector_len();
    let len = code.original_len as usize;
    if code.codes.len() != len.div_ceil(d) {
        return Err(Error::CorruptCode(format!(
            "expected {} codes for length {}, got {}",
            len.div_ceil(d),
            len,
            code.codes.len()
        )));
    }
    let mut out = Vec::with_capacity(len);
    for &c in &code.codes {
        if usize::from(c) >= cb.codebook_size() {
            return Err(Error::CorruptCode(format!("code {c} out of range")));
        }
        let cw = cb.codeword(usize::from(c));
        let take = d.min(len - out.len());
        out.extend_from_slice(&cw[..take]);
    }
    Ok(out)
}
