//! Packet inspection: decode a serialized client update given the
//! codebook geometry and print a per-layer summary.

use fedmpq::pq::packing::packed_len;

pub fn inspect_packet(
    bytes: &[u8],
    codebook_size: usize,
    subvector_len: usize,
) -> Result<String, String> {
    if !codebook_size.is_power_of_two() || codebook_size == 0 {
        return Err(format!("K must be a power of two, got {codebook_size}"));
    }
    if subvector_len == 0 {
        return Err("D must be >= 1".into());
    }
    let mut out = String::new();
    let mut cursor = 0usize;
    let mut layer_no = 0usize;
    while cursor < bytes.len() {
        let rest = &bytes[cursor..];
        if rest.len() < 11 {
            return Err(format!("truncated header at offset {cursor}"));
        }
        let layer_id = u16::from_le_bytes([rest[0], rest[1]]);
        let codebook_index = rest[2];
        let len = u32::from_le_bytes([rest[3], rest[4], rest[5], rest[6]]);
        let k_entries = u32::from_le_bytes([rest[7], rest[8], rest[9], rest[10]]) as usize;
        let code_bytes = packed_len(len, subvector_len, codebook_size);
        let half = codebook_size / 2;
        let pseudo_bytes = half * subvector_len * 4 + half * 4;
        let total = 11 + code_bytes + 8 * k_entries + pseudo_bytes;
        if rest.len() < total {
            return Err(format!(
                "layer {layer_no}: block needs {total} bytes, {} available",
                rest.len()
            ));
        }

        out.push_str(&format!(
            "layer {layer_id}: L={len} codebook={codebook_index} codes={} ({code_bytes} B) residual_entries={k_entries} ({} B) pseudo={half}x{subvector_len} (+counts, {pseudo_bytes} B) block={total} B\n",
            (len as usize).div_ceil(subvector_len),
            8 * k_entries,
        ));
        // Show the residual entries; there are few by construction.
        let mut off = 11 + code_bytes;
        for i in 0..k_entries.min(8) {
            let pos = u32::from_le_bytes(rest[off..off + 4].try_into().unwrap());
            let val = f32::from_le_bytes(rest[off + 4..off + 8].try_into().unwrap());
            out.push_str(&format!("  residual[{i}]: position {pos} value {val}\n"));
            off += 8;
        }
        if k_entries > 8 {
            out.push_str(&format!("  ... {} more residual entries\n", k_entries - 8));
        }
        cursor += total;
        layer_no += 1;
    }
    out.push_str(&format!("{layer_no} layers, {} bytes total\n", bytes.len()));
    Ok(out)
}
