//! Fixed-width bit packing of quantization codes.
//!
//! With a power-of-two codebook every code fits in exactly log2(K)
//! bits. Codes are written LSB-first: the first code occupies the
//! lowest-order bits of the first byte, and the stream is zero-padded
//! up to a byte boundary.

use super::quantize::QuantizationCode;
use crate::error::{Error, Result};

/// Bits per code for a power-of-two codebook size.
pub fn code_bits(codebook_size: usize) -> u32 {
    debug_assert!(codebook_size.is_power_of_two());
    codebook_size.trailing_zeros()
}

/// Packed byte length for `count` values of `bits` bits each.
pub fn packed_len_for(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Packed byte length for a layer of `len` values split into
/// `subvector_len` chunks against a codebook of `codebook_size`.
pub fn packed_len(len: u32, subvector_len: usize, codebook_size: usize) -> usize {
    let count = (len as usize).div_ceil(subvector_len);
    packed_len_for(count, code_bits(codebook_size))
}

/// Pack `values`, each strictly below `1 << bits`, LSB-first.
pub fn pack_bits(values: &[u16], bits: u32) -> Result<Vec<u8>> {
    debug_assert!(bits <= 16);
    let mut out = vec![0u8; packed_len_for(values.len(), bits)];
    let mut bit_pos = 0usize;
    for &v in values {
        if bits < 16 && v >= (1 << bits) {
            return Err(Error::CorruptCode(format!("value {v} exceeds {bits} bits")));
        }
        let mut remaining = bits;
        let mut val = u32::from(v);
        while remaining > 0 {
            let byte = bit_pos / 8;
            let offset = (bit_pos % 8) as u32;
            let take = remaining.min(8 - offset);
            out[byte] |= ((val & ((1u32 << take) - 1)) as u8) << offset;
            val >>= take;
            bit_pos += take as usize;
            remaining -= take;
        }
    }
    Ok(out)
}

/// Inverse of [`pack_bits`]: read `count` values of `bits` bits each.
pub fn unpack_bits(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<u16>> {
    if bytes.len() != packed_len_for(count, bits) {
        return Err(Error::CorruptPacket(format!(
            "expected {} packed bytes for {count} codes, got {}",
            packed_len_for(count, bits),
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut bit_pos = 0usize;
    for _ in 0..count {
        let mut val = 0u32;
        let mut got = 0u32;
        while got < bits {
            let byte = bit_pos / 8;
            let offset = (bit_pos % 8) as u32;
            let take = (bits - got).min(8 - offset);
            let chunk = (u32::from(bytes[byte]) >> offset) & ((1u32 << take) - 1);
            val |= chunk << got;
            got += take;
            bit_pos += take as usize;
        }
        out.push(val as u16);
    }
    Ok(out)
}

/// Pack a layer's codes given its codebook size.
pub fn pack_codes(code: &QuantizationCode, codebook_size: usize) -> Result<Vec<u8>> {
    if !codebook_size.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "codebook size must be a power of two, got {codebook_size}"
        )));
    }
    pack_bits(&code.codes, code_bits(codebook_size))
}

/// Inverse of [`pack_codes`]; the geometry pins the expected byte count.
pub fn unpack_codes(
    bytes: &[u8],
    codebook_size: usize,
    len: u32,
    subvector_len: usize,
) -> Result<Vec<u16>> {
    if !codebook_size.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "codebook size must be a power of two, got {codebook_size}"
        )));
    }
    let count = (len as usize).div_ceil(subvector_len);
    unpack_bits(bytes, code_bits(codebook_size), count)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: write values one bit at a time.
    fn naive_pack(values: &[u16], bits: u32) -> Vec<u8> {
        let mut bitstream = Vec::new();
        for &v in values {
            for b in 0..bits {
                bitstream.push((v >> b) & 1 == 1);
            }
        }
        while bitstream.len() % 8 != 0 {
            bitstream.push(false);
        }
        bitstream
            .chunks(8)
            .map(|byte| {
                byte.iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &bit)| acc | (u8::from(bit) << i))
            })
            .collect()
    }

    #[test]
    fn three_bit_codes_fit_twelve_bits_in_two_bytes() {
        // 0-based codes 0,1,2,3 at 3 bits each.
        let values = [0u16, 1, 2, 3];
        let packed = pack_bits(&values, 3).unwrap();
        assert_eq!(packed.len(), 2);
        assert_eq!(packed, naive_pack(&values, 3));
        assert_eq!(unpack_bits(&packed, 3, 4).unwrap(), values.to_vec());
    }

    #[test]
    fn first_codeword_everywhere_packs_to_zero_bytes() {
        let values = vec![0u16; 9];
        let packed = pack_bits(&values, 1).unwrap();
        assert_eq!(packed, vec![0u8, 0]);
    }

    #[test]
    fn matches_naive_writer_across_widths() {
        let mut rng = 0x12345678u64;
        let mut next = move || {
            rng = rng
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng >> 33) as u16
        };
        for bits in 1..=16u32 {
            for len in [1usize, 2, 7, 8, 9, 31] {
                let mask = if bits == 16 {
                    u16::MAX
                } else {
                    (1 << bits) - 1
                };
                let values: Vec<u16> = (0..len).map(|_| next() & mask).collect();
                let packed = pack_bits(&values, bits).unwrap();
                assert_eq!(packed, naive_pack(&values, bits), "bits={bits} len={len}");
                assert_eq!(unpack_bits(&packed, bits, len).unwrap(), values);
            }
        }
    }

    #[test]
    fn wrong_byte_count_is_a_corrupt_packet() {
        let packed = pack_bits(&[1, 2, 3], 4).unwrap();
        assert!(matches!(
            unpack_bits(&packed, 4, 5),
            Err(crate::error::Error::CorruptPacket(_))
        ));
    }

    #[test]
    fn value_too_wide_is_rejected() {
        assert!(pack_bits(&[8], 3).is_err());
    }

    #[test]
    fn degenerate_single_codeword_book_packs_to_nothing() {
        let packed = pack_bits(&[0, 0, 0], 0).unwrap();
        assert!(packed.is_empty());
        assert_eq!(unpack_bits(&packed, 0, 3).unwrap(), vec![0, 0, 0]);
    }
}
