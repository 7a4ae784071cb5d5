//! Codebooks: fixed-size tables of codewords used to quantize subvectors.

use crate::error::{Error, Result};

/// A table of `codebook_size` codewords, each a vector of `subvector_len`
/// components, owned by one model layer.
///
/// The codeword count must be a power of two so codes pack into an exact
/// number of bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    layer_id: u16,
    index: u8,
    codebook_size: usize,
    subvector_len: usize,
    codewords: Vec<f32>, // codebook_size * subvector_len, row-major
}

impl Codebook {
    /// Build a codebook from a flat row-major codeword matrix.
    pub fn new(
        layer_id: u16,
        index: u8,
        codebook_size: usize,
        subvector_len: usize,
        codewords: Vec<f32>,
    ) -> Result<Self> {
        if codebook_size == 0 || !codebook_size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "codebook size must be a power of two, got {codebook_size}"
            )));
        }
        if codebook_size > (1 << 16) {
            return Err(Error::InvalidConfig(format!(
                "codebook size {codebook_size} exceeds the 16-bit code space"
            )));
        }
        if subvector_len == 0 {
            return Err(Error::InvalidConfig("subvector length must be >= 1".into()));
        }
        if codewords.len() != codebook_size * subvector_len {
            return Err(Error::ShapeMismatch(format!(
                "expected {} codeword values, got {}",
                codebook_size * subvector_len,
                codewords.len()
            )));
        }
        Ok(Self {
            layer_id,
            index,
            codebook_size,
            subvector_len,
            codewords,
        })
    }

    /// Build from one row per codeword.
    pub fn from_rows(layer_id: u16, index: u8, rows: &[Vec<f32>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidConfig(
                "codebook needs at least one codeword".into(),
            ));
        }
        let subvector_len = rows[0].len();
        if rows.iter().any(|r| r.len() != subvector_len) {
            return Err(Error::ShapeMismatch("codeword lengths differ".into()));
        }
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        Self::new(layer_id, index, rows.len(), subvector_len, flat)
    }

    pub fn layer_id(&self) -> u16 {
        self.layer_id
    }

    /// Position of this codebook within its layer's set.
    pub fn index(&self) -> u8 {
        self.index
    }

    /// Number of codewords (always a power of two).
    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    /// Length of each codeword.
    pub fn subvector_len(&self) -> usize {
        self.subvector_len
    }

    pub fn codeword(&self, i: usize) -> &[f32] {
        let d = self.subvector_len;
        &self.codewords[i * d..(i + 1) * d]
    }

    pub fn codewords(&self) -> impl Iterator<Item = &[f32]> {
        self.codewords.chunks_exact(self.subvector_len)
    }

    /// Flat row-major view of the codeword matrix.
    pub fn as_flat(&self) -> &[f32] {
        &self.codewords
    }

    pub fn has_zero_codeword(&self) -> bool {
        self.codewords().any(|c| c.iter().all(|&v| v == 0.0))
    }

    /// Replace the codeword of smallest L2 norm (ties: lowest index) with
    /// the exact zero vector, guaranteeing quantization never expands a
    /// vector's norm.
    pub fn enforce_zero_codeword(mut self) -> Self {
        let mut best = 0usize;
        let mut best_norm = f64::INFINITY;
        for (i, cw) in self.codewords().enumerate() {
            let n: f64 = cw.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            if n < best_norm {
                best_norm = n;
                best = i;
            }
        }
        let d = self.subvector_len;
        self.codewords[best * d..(best + 1) * d].fill(0.0);
        self
    }

    /// Re-tag this codebook with a new position within a set.
    pub(crate) fn with_index(mut self, index: u8) -> Self {
        self.index = index;
        self
    }

    pub(crate) fn with_layer_id(mut self, layer_id: u16) -> Self {
        self.layer_id = layer_id;
        self
    }
}
