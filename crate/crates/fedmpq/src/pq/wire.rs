//! Client update packet wire format.
//!
//! One packet carries one block per model layer, concatenated in layer
//! order. Per layer, all integers little-endian:
//!
//! ```text
//! offset  size              field
//! 0       2                 layer_id (u16)
//! 2       1                 selected codebook index (u8, 0-based)
//! 3       4                 original vector length L (u32)
//! 7       4                 residual entry count k (u32)
//! 11      packed_len        codes, log2(K) bits each, LSB-first
//! ..      8 * k             residual entries (u32 position, f32 value)
//! ..      4 * (K/2) * D     pseudo-centroids, row-major f32
//! ..      4 * (K/2)         pseudo-centroid usage counts (u32)
//! ```
//!
//! Codes are 0-based on the wire. Decoding needs the layer geometry
//! (L, M, K, D), which both ends already share through the model schema
//! and the current codebook set.

use super::packing::{pack_bits, packed_len, unpack_codes};
use super::pseudo::PseudoCentroidSet;
use super::quantize::QuantizationCode;
use super::residual::SparseResidual;
use crate::error::{Error, Result};

/// Shape of one layer's compressed representation, shared by clients,
/// the aggregator, and the codebook service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerGeometry {
    pub layer_id: u16,
    /// Parameter count L of the layer.
    pub len: u32,
    /// Codebooks per layer (M).
    pub num_codebooks: usize,
    /// Codewords per codebook (K, power of two).
    pub codebook_size: usize,
    /// Codeword length (D).
    pub subvector_len: usize,
}

impl LayerGeometry {
    /// Subvectors per layer: ceil(L / D).
    pub fn code_count(&self) -> usize {
        (self.len as usize).div_ceil(self.subvector_len)
    }

    /// Pseudo-centroid block: floor(K/2) centroids plus their counts.
    pub fn pseudo_block_size(&self) -> usize {
        let half = self.codebook_size / 2;
        half * self.subvector_len * 4 + half * 4
    }

    /// Exact wire size of one layer block carrying `k_entries` residual
    /// entries.
    pub fn layer_wire_size(&self, k_entries: usize) -> usize {
        11 + packed_len(self.len, self.subvector_len, self.codebook_size)
            + 8 * k_entries
            + self.pseudo_block_size()
    }
}

/// One layer's share of a client update: codes, pruned residual, and the
/// pseudo-centroid upload.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerUpdate {
    pub code: QuantizationCode,
    pub residual: SparseResidual,
    pub pseudo: PseudoCentroidSet,
}

/// Everything a client pushes for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdatePacket {
    pub layers: Vec<LayerUpdate>,
}

impl ClientUpdatePacket {
    pub fn to_bytes(&self, geometry: &[LayerGeometry]) -> Result<Vec<u8>> {
        if self.layers.len() != geometry.len() {
            return Err(Error::SchemaMismatch(format!(
                "packet has {} layers, schema has {}",
                self.layers.len(),
                geometry.len()
            )));
        }
        let mut out = Vec::new();
        for (layer, geom) in self.layers.iter().zip(geometry) {
            encode_layer(layer, geom, &mut out)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], geometry: &[LayerGeometry]) -> Result<Self> {
        let mut cursor = 0usize;
        let mut layers = Vec::with_capacity(geometry.len());
        for geom in geometry {
            let (layer, used) = decode_layer(&bytes[cursor..], geom)?;
            cursor += used;
            layers.push(layer);
        }
        if cursor != bytes.len() {
            return Err(Error::CorruptPacket(format!(
                "{} trailing bytes after last layer",
                bytes.len() - cursor
            )));
        }
        Ok(Self { layers })
    }

    /// Serialized size without materializing the bytes.
    pub fn wire_size(&self, geometry: &[LayerGeometry]) -> usize {
        self.layers
            .iter()
            .zip(geometry)
            .map(|(l, g)| g.layer_wire_size(l.residual.entries.len()))
            .sum()
    }
}

fn encode_layer(layer: &LayerUpdate, geom: &LayerGeometry, out: &mut Vec<u8>) -> Result<()> {
    let code = &layer.code;
    if code.layer_id != geom.layer_id || code.original_len != geom.len {
        return Err(Error::SchemaMismatch(format!(
            "layer {} length {} does not match geometry ({}, {})",
            code.layer_id, code.original_len, geom.layer_id, geom.len
        )));
    }
    if usize::from(code.codebook_index) >= geom.num_codebooks {
        return Err(Error::SchemaMismatch(format!(
            "codebook index {} out of range",
            code.codebook_index
        )));
    }
    if code.codes.len() != geom.code_count() {
        return Err(Error::SchemaMismatch(
            "code count differs from geometry".into(),
        ));
    }
    let half = geom.codebook_size / 2;
    if layer.pseudo.usage_counts.len() != half
        || layer.pseudo.centroids.len() != half * geom.subvector_len
    {
        return Err(Error::SchemaMismatch("pseudo-centroid block shape".into()));
    }
    if layer.residual.original_len != geom.len {
        return Err(Error::SchemaMismatch(
            "residual length differs from layer".into(),
        ));
    }

    out.extend_from_slice(&code.layer_id.to_le_bytes());
    out.push(code.codebook_index);
    out.extend_from_slice(&code.original_len.to_le_bytes());
    out.extend_from_slice(&(layer.residual.entries.len() as u32).to_le_bytes());
    out.extend_from_slice(&pack_bits(
        &code.codes,
        super::packing::code_bits(geom.codebook_size),
    )?);
    for &(pos, val) in &layer.residual.entries {
        out.extend_from_slice(&pos.to_le_bytes());
        out.extend_from_slice(&val.to_le_bytes());
    }
    for &v in &layer.pseudo.centroids {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &c in &layer.pseudo.usage_counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(())
}

fn decode_layer(bytes: &[u8], geom: &LayerGeometry) -> Result<(LayerUpdate, usize)> {
    let need = |have: usize, want: usize| -> Result<()> {
        if have < want {
            Err(Error::CorruptPacket(format!(
                "layer block truncated: need {want} bytes, have {have}"
            )))
        } else {
            Ok(())
        }
    };
    need(bytes.len(), 11)?;
    let layer_id = u16::from_le_bytes([bytes[0], bytes[1]]);
    let codebook_index = bytes[2];
    let len = u32::from_le_bytes([bytes[3], bytes[4], bytes[5], bytes[6]]);
    let k_entries = u32::from_le_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]) as usize;

    if layer_id != geom.layer_id || len != geom.len {
        return Err(Error::SchemaMismatch(format!(
            "layer header ({layer_id}, {len}) does not match geometry ({}, {})",
            geom.layer_id, geom.len
        )));
    }
    if usize::from(codebook_index) >= geom.num_codebooks {
        return Err(Error::CorruptPacket(format!(
            "codebook index {codebook_index} out of range"
        )));
    }
    if k_entries > geom.len as usize {
        return Err(Error::CorruptPacket(format!(
            "{k_entries} residual entries exceed layer length {}",
            geom.len
        )));
    }

    let code_bytes = packed_len(geom.len, geom.subvector_len, geom.codebook_size);
    let total = geom.layer_wire_size(k_entries);
    need(bytes.len(), total)?;

    let mut cursor = 11;
    let codes = unpack_codes(
        &bytes[cursor..cursor + code_bytes],
        geom.codebook_size,
        geom.len,
        geom.subvector_len,
    )?;
    cursor += code_bytes;

    let mut entries = Vec::with_capacity(k_entries);
    let mut prev: Option<u32> = None;
    for _ in 0..k_entries {
        let pos = u32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap());
        let val = f32::from_le_bytes(bytes[cursor + 4..cursor + 8].try_into().unwrap());
        cursor += 8;
        if pos >= len {
            return Err(Error::CorruptPacket(format!(
                "residual position {pos} >= {len}"
            )));
        }
        if let Some(p) = prev {
            if pos <= p {
                return Err(Error::CorruptPacket(
                    "residual positions not increasing".into(),
                ));
            }
        }
        prev = Some(pos);
        entries.push((pos, val));
    }

    let half = geom.codebook_size / 2;
    let mut centroids = Vec::with_capacity(half * geom.subvector_len);
    for _ in 0..half * geom.subvector_len {
        centroids.push(f32::from_le_bytes(
            bytes[cursor..cursor + 4].try_into().unwrap(),
        ));
        cursor += 4;
    }
    let mut usage_counts = Vec::with_capacity(half);
    for _ in 0..half {
        usage_counts.push(u32::from_le_bytes(
            bytes[cursor..cursor + 4].try_into().unwrap(),
        ));
        cursor += 4;
    }

    Ok((
        LayerUpdate {
            code: QuantizationCode {
                layer_id,
                codebook_index,
                codes,
                original_len: len,
                pad_count: (geom.code_count() * geom.subvector_len - len as usize) as u16,
            },
            residual: SparseResidual {
                entries,
                original_len: len,
            },
            pseudo: PseudoCentroidSet {
                layer_id,
                source_codebook_index: codebook_index,
                centroids,
                usage_counts,
                subvector_len: geom.subvector_len,
            },
        },
        cursor,
    ))
}
