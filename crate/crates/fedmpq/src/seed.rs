//! Deterministic seed derivation.
//!
//! A single master seed fans out into independent streams keyed by a
//! domain label plus an index, so a rerun with the same master seed
//! reproduces every random choice (data generation, client sampling,
//! batch shuffling, clustering init) without the streams aliasing each
//! other.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive the seed for stream `domain[index]` from a master seed.
pub fn derive_seed(master: u64, domain: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(domain)).wrapping_add(index))
}

/// Convenience for streams indexed by two counters (e.g. round and client).
pub fn derive_seed2(master: u64, domain: &str, a: u64, b: u64) -> u64 {
    splitmix64(derive_seed(master, domain, a).wrapping_add(splitmix64(b)))
}
