//! Server-side codebook lifecycle.
//!
//! Each round the server rebuilds every layer's codebook set: one
//! codebook clustered from a gradient simulated on public data, the
//! rest clustered from the pseudo-centroids clients uploaded in the
//! previous round, split into equal parts. Without public data all
//! parts come from pseudo-centroids; without either (a cold start) the
//! public codebook is replicated under distinct seeds, or random
//! codebooks stand in.

pub mod kmeans;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::learning::data::Dataset;
use crate::learning::model::ModelArch;
use crate::learning::train::{local_train, TrainConfig};
use crate::learning::ModelState;
use crate::pq::quantize::split_subvectors;
use crate::pq::{Codebook, PseudoCentroidSet};
use crate::seed::derive_seed;

pub use kmeans::{KMeansConfig, KMeansResult};

/// One layer's codebooks for one round, uniform in shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    pub layer_id: u16,
    pub round: u32,
    codebooks: Vec<Codebook>,
}

impl CodebookSet {
    pub fn new(layer_id: u16, round: u32, codebooks: Vec<Codebook>) -> Result<Self> {
        if codebooks.is_empty() {
            return Err(Error::EmptyCodebookList);
        }
        if codebooks.len() > 256 {
            return Err(Error::InvalidConfig(
                "at most 256 codebooks per layer".into(),
            ));
        }
        let (k, d) = (codebooks[0].codebook_size(), codebooks[0].subvector_len());
        for (i, cb) in codebooks.iter().enumerate() {
            if cb.codebook_size() != k || cb.subvector_len() != d {
                return Err(Error::ShapeMismatch(
                    "codebook shapes differ within a set".into(),
                ));
            }
            if cb.index() as usize != i || cb.layer_id() != layer_id {
                return Err(Error::ShapeMismatch(format!(
                    "codebook at position {i} mislabeled (index {}, layer {})",
                    cb.index(),
                    cb.layer_id()
                )));
            }
        }
        Ok(Self {
            layer_id,
            round,
            codebooks,
        })
    }

    pub fn num_codebooks(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.codebooks[0].codebook_size()
    }

    pub fn subvector_len(&self) -> usize {
        self.codebooks[0].subvector_len()
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn codebook(&self, i: usize) -> &Codebook {
        &self.codebooks[i]
    }

    /// Serialize: header {layer_id u16, round u32, M u8, K u16, D u16}
    /// followed by M*K*D codeword values as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_size());
        out.extend_from_slice(&self.layer_id.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.push(self.codebooks.len() as u8);
        out.extend_from_slice(&(self.codebook_size() as u16).to_le_bytes());
        out.extend_from_slice(&(self.subvector_len() as u16).to_le_bytes());
        for cb in &self.codebooks {
            for &v in cb.as_flat() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 11 {
            return Err(Error::CorruptPacket("codebook set header truncated".into()));
        }
        let layer_id = u16::from_le_bytes([bytes[0], bytes[1]]);
        let round = u32::from_le_bytes([bytes[2], bytes[3], bytes[4], bytes[5]]);
        let m = bytes[6] as usize;
        let k = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
        let d = u16::from_le_bytes([bytes[9], bytes[10]]) as usize;
        let expected = 11 + m * k * d * 4;
        if bytes.len() != expected {
            return Err(Error::CorruptPacket(format!(
                "codebook set: expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut cursor = 11;
        let mut codebooks = Vec::with_capacity(m);
        for i in 0..m {
            let mut flat = Vec::with_capacity(k * d);
            for _ in 0..k * d {
                flat.push(f32::from_le_bytes(
                    bytes[cursor..cursor + 4].try_into().unwrap(),
                ));
                cursor += 4;
            }
            codebooks.push(Codebook::new(layer_id, i as u8, k, d, flat)?);
        }
        Self::new(layer_id, round, codebooks)
    }

    pub fn wire_size(&self) -> usize {
        11 + self.codebooks.len() * self.codebook_size() * self.subvector_len() * 4
    }
}

/// Knobs for per-layer codebook generation.
#[derive(Debug, Clone)]
pub struct CodebookGenConfig {
    pub num_codebooks: usize,
    pub codebook_size: usize,
    pub subvector_len: usize,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
    /// Weight pseudo-centroid clustering by usage counts.
    pub weighted: bool,
    /// Cap on pseudo-centroids used per part (None = use all).
    pub subsample: Option<usize>,
    /// Stream seed for this layer and round.
    pub seed: u64,
}

impl CodebookGenConfig {
    pub fn new(
        num_codebooks: usize,
        codebook_size: usize,
        subvector_len: usize,
        seed: u64,
    ) -> Self {
        Self {
            num_codebooks,
            codebook_size,
            subvector_len,
            kmeans_iters: 25,
            kmeans_tol: 1e-6,
            weighted: true,
            subsample: None,
            seed,
        }
    }

    fn kmeans_cfg(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            clusters: self.codebook_size,
            max_iters: self.kmeans_iters,
            seed,
            tol: self.kmeans_tol,
        }
    }
}

/// Run one local training pass on the public dataset from the current
/// global model, standing in for a client so the server has a gradient
/// to cluster. Returns one update vector per layer.
pub fn simulate_public_gradient(
    model: &ModelState,
    arch: &ModelArch,
    public_set: &Dataset,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<Vec<f32>>> {
    local_train(model, arch, public_set, train_cfg, seed)
}

fn cluster_codebook(
    layer_id: u16,
    index: u8,
    points: &[Vec<f32>],
    weights: Option<&[f64]>,
    cfg: &CodebookGenConfig,
    seed: u64,
) -> Result<Codebook> {
    let result = kmeans::kmeans(points, weights, &cfg.kmeans_cfg(seed))?;
    Codebook::from_rows(layer_id, index, &result.centroids).map(Codebook::enforce_zero_codeword)
}

fn zero_codebook(layer_id: u16, index: u8, cfg: &CodebookGenConfig) -> Codebook {
    // Cold-start fallback when there is neither public data nor client
    // feedback: all-zero codewords, i.e. transmit nothing. The first
    // round's pseudo-centroid uploads (assignment means) seed real
    // codebooks from the next round on.
    let flat = vec![0.0f32; cfg.codebook_size * cfg.subvector_len];
    Codebook::new(layer_id, index, cfg.codebook_size, cfg.subvector_len, flat)
        .expect("valid by construction")
}

/// Pool pseudo-centroid uploads into (point, weight) pairs.
fn pool_pseudo(
    sets: &[PseudoCentroidSet],
    subvector_len: usize,
) -> Result<(Vec<Vec<f32>>, Vec<f64>)> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for set in sets {
        if set.subvector_len != subvector_len {
            return Err(Error::ShapeMismatch(
                "pseudo-centroid length differs from configured subvector length".into(),
            ));
        }
        for i in 0..set.len() {
            points.push(set.centroid(i).to_vec());
            weights.push(f64::from(set.usage_counts[i]));
        }
    }
    Ok((points, weights))
}

/// Split `n` items into `parts` contiguous runs of floor(n/parts), with
/// the remainder appended to the last part.
fn part_bounds(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = n / parts;
    let mut out = Vec::with_capacity(parts);
    for i in 0..parts {
        let start = i * base;
        let end = if i + 1 == parts { n } else { start + base };
        out.push((start, end));
    }
    out
}

/// Build the next round's codebook set for one layer.
///
/// The first codebook comes from the public gradient's subvectors; the
/// pooled pseudo-centroids are shuffled deterministically, cut into
/// M-1 equal parts, and clustered one part per codebook (usage-weighted
/// unless configured otherwise). Without a public gradient the pool is
/// cut into M parts instead. Empty parts carry the previous round's
/// codebook forward. Every codebook ends with an exact zero codeword.
pub fn generate_codebooks(
    layer_id: u16,
    round: u32,
    public_gradient: Option<&[f32]>,
    pseudo_sets: &[PseudoCentroidSet],
    previous: Option<&CodebookSet>,
    cfg: &CodebookGenConfig,
) -> Result<CodebookSet> {
    if cfg.num_codebooks == 0 {
        return Err(Error::InvalidConfig("need at least one codebook".into()));
    }
    let m = cfg.num_codebooks;
    let d = cfg.subvector_len;

    let public_points: Option<Vec<Vec<f32>>> = match public_gradient {
        Some(grad) if !grad.is_empty() => Some(split_subvectors(grad, d)?.0),
        _ => None,
    };
    let (mut pool, mut pool_weights) = pool_pseudo(pseudo_sets, d)?;

    // Deterministic shuffle of the pooled centroids.
    if !pool.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "pool", 0));
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
            pool_weights.swap(i, j);
        }
    }

    let mut codebooks: Vec<Codebook> = Vec::with_capacity(m);

    if let Some(points) = &public_points {
        if pool.is_empty() {
            // Bootstrap: no client feedback yet. Replicate the public
            // codebook under distinct seeds so M codebooks exist.
            for i in 0..m {
                codebooks.push(cluster_codebook(
                    layer_id,
                    i as u8,
                    points,
                    None,
                    cfg,
                    derive_seed(cfg.seed, "bootstrap", i as u64),
                )?);
            }
            return CodebookSet::new(layer_id, round, codebooks);
        }
        codebooks.push(cluster_codebook(
            layer_id,
            0,
            points,
            None,
            cfg,
            derive_seed(cfg.seed, "public", 0),
        )?);
    } else if pool.is_empty() {
        // Neither public data nor pseudo-centroids.
        if let Some(prev) = previous {
            for (i, cb) in prev.codebooks().iter().enumerate() {
                codebooks.push(cb.clone().with_index(i as u8).with_layer_id(layer_id));
            }
            return CodebookSet::new(layer_id, round, codebooks);
        }
        for i in 0..m {
            codebooks.push(zero_codebook(layer_id, i as u8, cfg));
        }
        return CodebookSet::new(layer_id, round, codebooks);
    }

    let parts = m - codebooks.len();
    debug_assert!(parts >= 1 || m == codebooks.len());
    if parts == 0 {
        // M = 1 with public data: the public codebook is the whole set.
        return CodebookSet::new(layer_id, round, codebooks);
    }

    for (slot, (start, end)) in part_bounds(pool.len(), parts).into_iter().enumerate() {
        let index = (codebooks.len()) as u8;
        let (mut start, mut end) = (start, end);
        if let Some(cap) = cfg.subsample {
            end = end.min(start + cap.max(1));
        }
        if start >= end {
            // Empty part: carry the previous codebook forward, or fall
            // back to the whole pool under a distinct seed.
            if let Some(prev) = previous {
                if usize::from(index) < prev.num_codebooks() {
                    codebooks.push(
                        prev.codebook(usize::from(index))
                            .clone()
                            .with_index(index)
                            .with_layer_id(layer_id),
                    );
                    continue;
                }
            }
            start = 0;
            end = pool.len();
        }
        let points = &pool[start..end];
        let weights = &pool_weights[start..end];
        codebooks.push(cluster_codebook(
            layer_id,
            index,
            points,
            if cfg.weighted { Some(weights) } else { None },
            cfg,
            derive_seed(cfg.seed, "part", slot as u64),
        )?);
    }

    CodebookSet::new(layer_id, round, codebooks)
}
