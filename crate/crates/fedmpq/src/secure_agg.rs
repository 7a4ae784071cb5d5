//! Compressed-domain aggregation behind a trust boundary.
//!
//! This module stands in for the TEE/trusted-third-party of a real
//! deployment: packets go in, only the aggregate comes out. Codes are
//! accumulated as per-position one-hot counts (one count matrix per
//! codebook, since clients choose different codebooks), residuals are
//! summed densely, and reconstruction multiplies counts by codewords so
//! aggregation and decompression commute. The public API deliberately
//! has no accessor for anything per-client: after `submit` returns, the
//! packet's contents exist only inside the running sums. Pseudo-
//! centroid uploads pass through as an unattributed pool for codebook
//! regeneration.

use std::collections::BTreeSet;

use crate::codebooks::CodebookSet;
use crate::error::{Error, Result};
use crate::pq::{ClientUpdatePacket, LayerGeometry, PseudoCentroidSet};

/// Running compressed-domain totals for one layer.
#[derive(Debug, Clone)]
pub struct LayerAggregate {
    pub layer_id: u16,
    len: u32,
    rows: usize,
    codebook_size: usize,
    /// One count matrix per codebook, each rows x K, row-major.
    counts: Vec<Vec<u32>>,
    /// Dense residual sum, length L.
    residual_sum: Vec<f64>,
}

impl LayerAggregate {
    fn new(geom: &LayerGeometry) -> Self {
        let rows = geom.code_count();
        Self {
            layer_id: geom.layer_id,
            len: geom.len,
            rows,
            codebook_size: geom.codebook_size,
            counts: vec![vec![0u32; rows * geom.codebook_size]; geom.num_codebooks],
            residual_sum: vec![0.0f64; geom.len as usize],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Count matrix for one codebook, row-major rows x K.
    pub fn counts(&self, codebook: usize) -> &[u32] {
        &self.counts[codebook]
    }

    pub fn residual_sum(&self) -> &[f64] {
        &self.residual_sum
    }
}

/// What the trust boundary emits: per-layer count matrices and residual
/// sums, plus the participant count. No per-client data.
#[derive(Debug, Clone)]
pub struct CompressedAggregate {
    pub layers: Vec<LayerAggregate>,
    pub participants: u32,
}

/// The aggregate mean update alongside the pooled pseudo-centroids.
#[derive(Debug)]
pub struct AggregationOutput {
    /// Mean update per layer (uniform 1/N weighting).
    pub mean_update: Vec<Vec<f32>>,
    /// Pseudo-centroid uploads grouped by layer, stripped of client
    /// identity.
    pub pseudo_pool: Vec<Vec<PseudoCentroidSet>>,
}

/// Accepts client packets for one round and exposes only aggregates.
#[derive(Debug)]
pub struct Aggregator {
    schema: Vec<LayerGeometry>,
    layers: Vec<LayerAggregate>,
    pseudo_pool: Vec<Vec<PseudoCentroidSet>>,
    seen: BTreeSet<u64>,
}

impl Aggregator {
    pub fn new(schema: Vec<LayerGeometry>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::InvalidConfig(
                "aggregation schema has no layers".into(),
            ));
        }
        let layers = schema.iter().map(LayerAggregate::new).collect();
        let pseudo_pool = schema.iter().map(|_| Vec::new()).collect();
        Ok(Self {
            schema,
            layers,
            pseudo_pool,
            seen: BTreeSet::new(),
        })
    }

    pub fn participants(&self) -> u32 {
        self.seen.len() as u32
    }

    /// Decode a serialized packet against the session schema and fold
    /// it in.
    pub fn submit_bytes(&mut self, client_id: u64, bytes: &[u8]) -> Result<()> {
        let packet = ClientUpdatePacket::from_bytes(bytes, &self.schema)?;
        self.submit(client_id, &packet)
    }

    /// Validate and fold one packet into the running totals. On any
    /// schema mismatch the packet is rejected whole and the participant
    /// count is unchanged.
    pub fn submit(&mut self, client_id: u64, packet: &ClientUpdatePacket) -> Result<()> {
        if self.seen.contains(&client_id) {
            return Err(Error::DuplicateClient(client_id));
        }
        if packet.layers.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "packet has {} layers, schema has {}",
                packet.layers.len(),
                self.schema.len()
            )));
        }
        // Full validation pass before any mutation.
        for (layer, geom) in packet.layers.iter().zip(&self.schema) {
            let code = &layer.code;
            if code.layer_id != geom.layer_id || code.original_len != geom.len {
                return Err(Error::SchemaMismatch(format!(
                    "layer {} does not match schema layer {}",
                    code.layer_id, geom.layer_id
                )));
            }
            if usize::from(code.codebook_index) >= geom.num_codebooks {
                return Err(Error::SchemaMismatch("codebook index out of range".into()));
            }
            if code.codes.len() != geom.code_count() {
                return Err(Error::SchemaMismatch(
                    "code count differs from schema".into(),
                ));
            }
            if code
                .codes
                .iter()
                .any(|&c| usize::from(c) >= geom.codebook_size)
            {
                return Err(Error::SchemaMismatch(
                    "code value exceeds codebook size".into(),
                ));
            }
            if layer.residual.original_len != geom.len {
                return Err(Error::SchemaMismatch(
                    "residual length differs from layer".into(),
                ));
            }
            let mut prev: Option<u32> = None;
            for &(pos, _) in &layer.residual.entries {
                if pos >= geom.len || prev.is_some_and(|p| pos <= p) {
                    return Err(Error::SchemaMismatch("residual positions invalid".into()));
                }
                prev = Some(pos);
            }
            let half = geom.codebook_size / 2;
            if layer.pseudo.usage_counts.len() != half
                || layer.pseudo.centroids.len() != half * geom.subvector_len
            {
                return Err(Error::SchemaMismatch("pseudo-centroid block shape".into()));
            }
        }

        for ((layer, geom), agg) in packet
            .layers
            .iter()
            .zip(&self.schema)
            .zip(self.layers.iter_mut())
        {
            let n = usize::from(layer.code.codebook_index);
            for (row, &code) in layer.code.codes.iter().enumerate() {
                agg.counts[n][row * geom.codebook_size + usize::from(code)] += 1;
            }
            for &(pos, val) in &layer.residual.entries {
                agg.residual_sum[pos as usize] += f64::from(val);
            }
        }
        for (pool, layer) in self.pseudo_pool.iter_mut().zip(&packet.layers) {
            pool.push(layer.pseudo.clone());
        }
        self.seen.insert(client_id);
        Ok(())
    }

    /// Close the session and hand out the compressed aggregate.
    pub fn into_aggregate(self) -> Result<(CompressedAggregate, Vec<Vec<PseudoCentroidSet>>)> {
        if self.seen.is_empty() {
            return Err(Error::EmptyAggregation);
        }
        Ok((
            CompressedAggregate {
                layers: self.layers,
                participants: self.seen.len() as u32,
            },
            self.pseudo_pool,
        ))
    }

    /// Reconstruct the mean update from the compressed totals and the
    /// codebooks clients quantized against. Terminal for the session.
    pub fn finalize(self, codebooks: &[CodebookSet]) -> Result<AggregationOutput> {
        let schema = self.schema.clone();
        let (agg, pseudo_pool) = self.into_aggregate()?;
        let mean_update = reconstruct(&agg, &schema, codebooks)?;
        Ok(AggregationOutput {
            mean_update,
            pseudo_pool,
        })
    }
}

/// `g = (sum_n O_n C_n + R) / N` per layer, truncated to the layer
/// length.
pub fn reconstruct(
    agg: &CompressedAggregate,
    schema: &[LayerGeometry],
    codebooks: &[CodebookSet],
) -> Result<Vec<Vec<f32>>> {
    if agg.layers.len() != codebooks.len() || schema.len() != agg.layers.len() {
        return Err(Error::SchemaMismatch("layer count differs".into()));
    }
    let n = f64::from(agg.participants);
    let mut out = Vec::with_capacity(agg.layers.len());
    for ((layer, geom), set) in agg.layers.iter().zip(schema).zip(codebooks) {
        if set.layer_id != layer.layer_id
            || set.num_codebooks() != layer.counts.len()
            || set.codebook_size() != layer.codebook_size
            || set.subvector_len() != geom.subvector_len
        {
            return Err(Error::SchemaMismatch(format!(
                "codebook set does not match aggregate for layer {}",
                layer.layer_id
            )));
        }
        let d = geom.subvector_len;
        let len = layer.len as usize;
        let mut sum = layer.residual_sum.clone();
        for (cb_index, counts) in layer.counts.iter().enumerate() {
            let cb = set.codebook(cb_index);
            for row in 0..layer.rows {
                let base = row * d;
                for code in 0..layer.codebook_size {
                    let c = counts[row * layer.codebook_size + code];
                    if c == 0 {
                        continue;
                    }
                    let cw = cb.codeword(code);
                    let weight = f64::from(c);
                    let take = d.min(len - base);
                    for j in 0..take {
                        sum[base + j] += weight * f64::from(cw[j]);
                    }
                }
            }
        }
        out.push(sum.into_iter().map(|v| (v / n) as f32).collect());
    }
    Ok(out)
}

/// Dense-domain sibling of [`Aggregator`] used by baselines and the
/// uncompressed path: per-client reconstructions are summed inside the
/// boundary and only the mean leaves it.
#[derive(Debug)]
pub struct DenseAggregator {
    lens: Vec<usize>,
    sums: Vec<Vec<f64>>,
    seen: BTreeSet<u64>,
}

impl DenseAggregator {
    pub fn new(layer_lens: &[u32]) -> Result<Self> {
        if layer_lens.is_empty() {
            return Err(Error::InvalidConfig(
                "aggregation schema has no layers".into(),
            ));
        }
        Ok(Self {
            lens: layer_lens.iter().map(|&l| l as usize).collect(),
            sums: layer_lens
                .iter()
                .map(|&l| vec![0.0f64; l as usize])
                .collect(),
            seen: BTreeSet::new(),
        })
    }

    pub fn submit(&mut self, client_id: u64, layers: &[Vec<f32>]) -> Result<()> {
        if self.seen.contains(&client_id) {
            return Err(Error::DuplicateClient(client_id));
        }
        if layers.len() != self.lens.len()
            || layers.iter().zip(&self.lens).any(|(l, &n)| l.len() != n)
        {
            return Err(Error::SchemaMismatch("dense update shape".into()));
        }
        for (sum, layer) in self.sums.iter_mut().zip(layers) {
            for (s, &v) in sum.iter_mut().zip(layer) {
                *s += f64::from(v);
            }
        }
        self.seen.insert(client_id);
        Ok(())
    }

    pub fn participants(&self) -> u32 {
        self.seen.len() as u32
    }

    pub fn finalize(self) -> Result<Vec<Vec<f32>>> {
        if self.seen.is_empty() {
            return Err(Error::EmptyAggregation);
        }
        let n = self.seen.len() as f64;
        Ok(self
            .sums
            .into_iter()
            .map(|sum| sum.into_iter().map(|v| (v / n) as f32).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pq::residual::SparseResidual;
    use crate::pq::{Codebook, LayerUpdate, PseudoCentroidSet, QuantizationCode};

    fn geom() -> LayerGeometry {
        LayerGeometry {
            layer_id: 0,
            len: 4,
            num_codebooks: 1,
            codebook_size: 2,
            subvector_len: 2,
        }
    }

    fn empty_pseudo(geom: &LayerGeometry) -> PseudoCentroidSet {
        let half = geom.codebook_size / 2;
        PseudoCentroidSet {
            layer_id: geom.layer_id,
            source_codebook_index: 0,
            centroids: vec![0.0; half * geom.subvector_len],
            usage_counts: vec![0; half],
            subvector_len: geom.subvector_len,
        }
    }

    fn packet(
        geom: &LayerGeometry,
        codebook_index: u8,
        codes: Vec<u16>,
        entries: Vec<(u32, f32)>,
    ) -> ClientUpdatePacket {
        ClientUpdatePacket {
            layers: vec![LayerUpdate {
                code: QuantizationCode {
                    layer_id: geom.layer_id,
                    codebook_index,
                    codes,
                    original_len: geom.len,
                    pad_count: 0,
                },
                residual: SparseResidual {
                    entries,
                    original_len: geom.len,
                },
                pseudo: empty_pseudo(geom),
            }],
        }
    }

    fn set_for(geom: &LayerGeometry, rows_list: Vec<Vec<Vec<f32>>>) -> Vec<CodebookSet> {
        let cbs: Vec<Codebook> = rows_list
            .into_iter()
            .enumerate()
            .map(|(i, rows)| Codebook::from_rows(geom.layer_id, i as u8, &rows).unwrap())
            .collect();
        vec![CodebookSet::new(geom.layer_id, 0, cbs).unwrap()]
    }

    #[test]
    fn one_hot_counts_accumulate() {
        // Clients with codes [2,1] and [2,2] in 1-based terms.
        let g = geom();
        let mut agg = Aggregator::new(vec![g]).unwrap();
        agg.submit(1, &packet(&g, 0, vec![1, 0], vec![])).unwrap();
        agg.submit(2, &packet(&g, 0, vec![1, 1], vec![])).unwrap();
        let (out, _) = agg.into_aggregate().unwrap();
        assert_eq!(out.layers[0].counts(0), &[0, 2, 1, 1]);
    }

    #[test]
    fn no_residuals_means_zero_residual_sum() {
        let g = geom();
        let mut agg = Aggregator::new(vec![g]).unwrap();
        agg.submit(1, &packet(&g, 0, vec![0, 0], vec![])).unwrap();
        let (out, _) = agg.into_aggregate().unwrap();
        assert!(out.layers[0].residual_sum().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn different_codebooks_partition_the_counts() {
        let g = LayerGeometry {
            num_codebooks: 2,
            ..geom()
        };
        let mut agg = Aggregator::new(vec![g]).unwrap();
        agg.submit(1, &packet(&g, 0, vec![0, 1], vec![])).unwrap();
        agg.submit(2, &packet(&g, 1, vec![1, 1], vec![])).unwrap();
        let (out, _) = agg.into_aggregate().unwrap();
        let layer = &out.layers[0];
        for row in 0..2 {
            let row_sum: u32 = (0..2).map(|c| layer.counts(0)[row * 2 + c]).sum();
            assert_eq!(row_sum, 1);
            let row_sum: u32 = (0..2).map(|c| layer.counts(1)[row * 2 + c]).sum();
            assert_eq!(row_sum, 1);
        }
    }

    #[test]
    fn finalize_matches_hand_product() {
        let g = geom();
        let mut agg = Aggregator::new(vec![g]).unwrap();
        agg.submit(1, &packet(&g, 0, vec![1, 0], vec![])).unwrap();
        agg.submit(2, &packet(&g, 0, vec![1, 1], vec![])).unwrap();
        let sets = set_for(&g, vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]]]);
        let out = agg.finalize(&sets).unwrap();
        assert_eq!(out.mean_update[0], vec![1.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn single_client_identity() {
        let g = geom();
        let sets = set_for(&g, vec![vec![vec![0.25, -0.5], vec![1.5, 2.0]]]);
        let p = packet(&g, 0, vec![1, 0], vec![(1, 0.125), (3, -0.25)]);
        let mut agg = Aggregator::new(vec![g]).unwrap();
        agg.submit(7, &p).unwrap();
        let out = agg.finalize(&sets).unwrap();

        let deq = crate::pq::dequantize(&p.layers[0].code, sets[0].codebook(0)).unwrap();
        let dense = p.layers[0].residual.densify();
        let expect: Vec<f32> = deq.iter().zip(&dense).map(|(&a, &b)| a + b).collect();
        assert_eq!(out.mean_update[0], expect);
    }

    #[test]
    fn identical_packets_average_to_one_reconstruction() {
        let g = geom();
        let sets = set_for(&g, vec![vec![vec![0.0, 0.0], vec![1.0, -1.0]]]);
        let p = packet(&g, 0, vec![1, 1], vec![(0, 0.5)]);
        let mut agg = Aggregator::new(vec![g]).unwrap();
        for id in 0..5u64 {
            agg.submit(id, &p).unwrap();
        }
        let out = agg.finalize(&sets).unwrap();
        let deq = crate::pq::dequantize(&p.layers[0].code, sets[0].codebook(0)).unwrap();
        let dense = p.layers[0].residual.densify();
        for ((&got, &a), &b) in out.mean_update[0].iter().zip(&deq).zip(&dense) {
            assert!((f64::from(got) - (f64::from(a) + f64::from(b))).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_client_rejected() {
        let g = geom();
        let mut agg = Aggregator::new(vec![g]).unwrap();
        agg.submit(1, &packet(&g, 0, vec![0, 0], vec![])).unwrap();
        let err = agg.submit(1, &packet(&g, 0, vec![0, 0], vec![]));
        assert!(matches!(err, Err(Error::DuplicateClient(1))));
        assert_eq!(agg.participants(), 1);
    }

    #[test]
    fn schema_mismatch_rejected_without_counting() {
        let g = geom();
        let mut agg = Aggregator::new(vec![g]).unwrap();
        let bad = packet(&g, 0, vec![0], vec![]); // wrong code count
        assert!(matches!(agg.submit(1, &bad), Err(Error::SchemaMismatch(_))));
        assert_eq!(agg.participants(), 0);
        let bad_index = packet(&g, 3, vec![0, 0], vec![]);
        assert!(agg.submit(1, &bad_index).is_err());
        assert_eq!(agg.participants(), 0);
    }

    #[test]
    fn finalize_without_submissions_is_an_error() {
        let g = geom();
        let sets = set_for(&g, vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]]]);
        let agg = Aggregator::new(vec![g]).unwrap();
        assert!(matches!(agg.finalize(&sets), Err(Error::EmptyAggregation)));
    }

    #[test]
    fn wire_submission_equals_in_memory_submission() {
        let g = geom();
        let sets = set_for(&g, vec![vec![vec![0.25, -0.5], vec![1.5, 2.0]]]);
        let p = packet(&g, 0, vec![1, 0], vec![(2, 0.75)]);
        let bytes = p.to_bytes(&[g]).unwrap();

        let mut from_packet = Aggregator::new(vec![g]).unwrap();
        from_packet.submit(1, &p).unwrap();
        let mut from_bytes = Aggregator::new(vec![g]).unwrap();
        from_bytes.submit_bytes(1, &bytes).unwrap();

        let a = from_packet.finalize(&sets).unwrap();
        let b = from_bytes.finalize(&sets).unwrap();
        assert_eq!(a.mean_update, b.mean_update);
    }

    #[test]
    fn one_hot_mass_is_conserved() {
        let g = LayerGeometry {
            num_codebooks: 3,
            codebook_size: 4,
            len: 10,
            subvector_len: 3,
            layer_id: 0,
        };
        let mut agg = Aggregator::new(vec![g]).unwrap();
        let n = 6u64;
        for id in 0..n {
            let codes: Vec<u16> = (0..g.code_count())
                .map(|r| ((id as usize + r) % g.codebook_size) as u16)
                .collect();
            let p = packet(&g, (id % 3) as u8, codes, vec![]);
            agg.submit(id, &p).unwrap();
        }
        let (out, _) = agg.into_aggregate().unwrap();
        let layer = &out.layers[0];
        for row in 0..layer.rows() {
            let mut total = 0u32;
            for cb in 0..3 {
                for code in 0..g.codebook_size {
                    total += layer.counts(cb)[row * g.codebook_size + code];
                }
            }
            assert_eq!(total, n as u32);
        }
    }
}
