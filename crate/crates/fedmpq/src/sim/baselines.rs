//! Baseline compressors: per-layer min-max scalar quantization and
//! plain top-k pruning. Both feed the same dense aggregation boundary
//! as the uncompressed path.

use crate::error::{Error, Result};
use crate::pq::packing::{pack_bits, unpack_bits};
use crate::pq::residual::{prune_residual, SparseResidual};

/// One layer scalar-quantized into `2^bits` uniform levels between the
/// observed min and max.
///
/// Wire layout: {layer_id u16, L u32, bits u8, min f32, max f32} +
/// packed codes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuantized {
    pub layer_id: u16,
    pub len: u32,
    pub bits: u8,
    pub min: f32,
    pub max: f32,
    pub packed: Vec<u8>,
}

pub fn scalar_quantize(layer_id: u16, z: &[f32], bits: u8) -> Result<ScalarQuantized> {
    if !(1..=16).contains(&bits) {
        return Err(Error::InvalidConfig(format!(
            "scalar quantization bits must be in [1, 16], got {bits}"
        )));
    }
    if z.is_empty() {
        return Err(Error::EmptyVector);
    }
    let min = z.iter().copied().fold(f32::INFINITY, f32::min);
    let max = z.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let levels = (1u32 << bits) - 1;
    let codes: Vec<u16> = if max > min {
        let step = (f64::from(max) - f64::from(min)) / f64::from(levels);
        z.iter()
            .map(|&v| {
                let q = ((f64::from(v) - f64::from(min)) / step).round();
                q.clamp(0.0, f64::from(levels)) as u16
            })
            .collect()
    } else {
        // Constant layer: every value reconstructs to min exactly.
        vec![0u16; z.len()]
    };
    Ok(ScalarQuantized {
        layer_id,
        len: z.len() as u32,
        bits,
        min,
        max,
        packed: pack_bits(&codes, u32::from(bits))?,
    })
}

impl ScalarQuantized {
    pub fn reconstruct(&self) -> Result<Vec<f32>> {
        let codes = unpack_bits(&self.packed, u32::from(self.bits), self.len as usize)?;
        let levels = (1u32 << self.bits) - 1;
        if self.max > self.min {
            let step = (f64::from(self.max) - f64::from(self.min)) / f64::from(levels);
            Ok(codes
                .iter()
                .map(|&c| (f64::from(self.min) + step * f64::from(c)) as f32)
                .collect())
        } else {
            Ok(vec![self.min; self.len as usize])
        }
    }

    pub fn wire_size(&self) -> usize {
        15 + self.packed.len()
    }
}

/// Top-k pruning applied directly to the update (no quantization
/// stage). Wire layout per layer: {layer_id u16, L u32, k u32} + 8k
/// bytes of entries.
pub fn topk_compress(z: &[f32], ratio: f64) -> Result<SparseResidual> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "top-k ratio must be in (0, 1], got {ratio}"
        )));
    }
    prune_residual(z, ratio)
}

pub fn topk_wire_size(entries: usize) -> usize {
    10 + 8 * entries
}

/// Uncompressed layer: {layer_id u16, L u32} + raw f32 values.
pub fn raw_wire_size(len: usize) -> usize {
    6 + 4 * len
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_error_within_one_step() {
        let z: Vec<f32> = (0..101).map(|i| -1.0 + 0.02 * i as f32).collect();
        let sq = scalar_quantize(0, &z, 16).unwrap();
        let back = sq.reconstruct().unwrap();
        let bound = 2.0 / (f64::from(u16::MAX));
        for (&a, &b) in z.iter().zip(&back) {
            assert!((f64::from(a) - f64::from(b)).abs() <= bound);
        }
    }

    #[test]
    fn constant_layer_reconstructs_exactly() {
        let z = vec![0.75f32; 9];
        let sq = scalar_quantize(0, &z, 4).unwrap();
        assert_eq!(sq.reconstruct().unwrap(), z);
    }

    #[test]
    fn extremes_are_exact() {
        let z = vec![-0.5f32, 0.25, 1.5];
        let sq = scalar_quantize(0, &z, 8).unwrap();
        let back = sq.reconstruct().unwrap();
        assert_eq!(back[0], -0.5);
        assert_eq!(back[2], 1.5);
    }

    #[test]
    fn topk_full_ratio_is_identity() {
        let z = [0.5f32, -2.0, 0.0, 1.0];
        let s = topk_compress(&z, 1.0).unwrap();
        assert_eq!(s.densify(), z.to_vec());
    }

    #[test]
    fn topk_rejects_zero_ratio() {
        assert!(topk_compress(&[1.0], 0.0).is_err());
    }

    #[test]
    fn bits_out_of_range_rejected() {
        assert!(scalar_quantize(0, &[1.0], 0).is_err());
        assert!(scalar_quantize(0, &[1.0], 17).is_err());
    }
}
