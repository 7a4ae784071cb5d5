//! The five-step round loop: pull, client update, push, model update,
//! codebook update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::baselines;
use super::experiment::RoundMetrics;
use super::ledger::CommLedger;
use super::{RoundConfig, Strategy};
use crate::codebooks::{
    generate_codebooks, simulate_public_gradient, CodebookGenConfig, CodebookSet,
};
use crate::error::{Error, Result};
use crate::learning::data::FederationData;
use crate::learning::model::{evaluate, ModelArch, ModelState};
use crate::learning::train::{apply_server_update, local_train, TrainConfig};
use crate::pq::quantize::grouped_norm_sq;
use crate::pq::{
    prune_residual, quantize_best, split_subvectors, update_pseudo_centroids, ClientUpdatePacket,
    LayerGeometry, LayerUpdate,
};
use crate::secure_agg::{Aggregator, DenseAggregator};
use crate::seed::{derive_seed, derive_seed2};

/// One federated training run in progress.
pub struct Simulation {
    arch: ModelArch,
    model: ModelState,
    fed: FederationData,
    train_cfg: TrainConfig,
    cfg: RoundConfig,
    codebooks: Vec<CodebookSet>,
    ledger: CommLedger,
    master_seed: u64,
    round: u32,
}

/// What one client produced this round, before aggregation.
struct ClientWork {
    client_id: u64,
    packet: Option<ClientUpdatePacket>,
    dense: Option<Vec<Vec<f32>>>,
    uplink_bytes: u64,
    squared_error: f64,
    taus: Vec<f64>,
    selections: Vec<u8>,
}

impl Simulation {
    pub fn new(
        arch: ModelArch,
        fed: FederationData,
        train_cfg: TrainConfig,
        cfg: RoundConfig,
        master_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if fed.clients.is_empty() {
            return Err(Error::InvalidConfig("federation has no clients".into()));
        }
        if cfg.clients_per_round > fed.clients.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot sample {} of {} clients",
                cfg.clients_per_round,
                fed.clients.len()
            )));
        }
        let model = arch.init_state(derive_seed(master_seed, "init", 0));
        let mut sim = Self {
            arch,
            model,
            fed,
            train_cfg,
            cfg,
            codebooks: Vec::new(),
            ledger: CommLedger::new(),
            master_seed,
            round: 0,
        };
        if sim.cfg.strategy.uses_codebooks() {
            sim.codebooks = sim.regenerate_codebooks(&[])?;
        }
        Ok(sim)
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn codebook_sets(&self) -> &[CodebookSet] {
        &self.codebooks
    }

    pub fn config(&self) -> &RoundConfig {
        &self.cfg
    }

    pub fn rounds_completed(&self) -> u32 {
        self.round
    }

    /// Accuracy and loss of the current global model on the test set.
    pub fn evaluate_current(&self) -> Result<(f64, f64)> {
        evaluate(&self.model, &self.arch, &self.fed.test_set)
    }

    /// Layer geometry shared by packets, the aggregator, and codebooks.
    pub fn geometry(&self) -> Vec<LayerGeometry> {
        self.model
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerGeometry {
                layer_id: i as u16,
                len: l.values.len() as u32,
                num_codebooks: self.cfg.effective_codebooks(),
                codebook_size: self.cfg.codebook_size,
                subvector_len: self.cfg.subvector_len,
            })
            .collect()
    }

    fn sample_clients(&self, round: u32) -> Vec<usize> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, "sample", u64::from(round)));
        let mut picked =
            rand::seq::index::sample(&mut rng, self.fed.clients.len(), self.cfg.clients_per_round)
                .into_vec();
        picked.sort_unstable();
        picked
    }

    fn regenerate_codebooks(
        &mut self,
        pseudo_pool: &[Vec<crate::pq::PseudoCentroidSet>],
    ) -> Result<Vec<CodebookSet>> {
        let next_round = self.round;
        let public_grad: Option<Vec<Vec<f32>>> =
            if self.cfg.use_public_data && !self.fed.public_set.is_empty() {
                Some(simulate_public_gradient(
                    &self.model,
                    &self.arch,
                    &self.fed.public_set,
                    &self.train_cfg,
                    derive_seed(self.master_seed, "public-grad", u64::from(next_round)),
                )?)
            } else {
                None
            };
        let empty: Vec<crate::pq::PseudoCentroidSet> = Vec::new();
        let mut sets = Vec::with_capacity(self.model.layers.len());
        for (layer_idx, _) in self.model.layers.iter().enumerate() {
            let gen_cfg = CodebookGenConfig {
                num_codebooks: self.cfg.effective_codebooks(),
                codebook_size: self.cfg.codebook_size,
                subvector_len: self.cfg.subvector_len,
                kmeans_iters: self.cfg.kmeans_iters,
                kmeans_tol: self.cfg.kmeans_tol,
                weighted: self.cfg.weighted_clustering,
                subsample: self.cfg.pseudo_subsample,
                seed: derive_seed2(
                    self.master_seed,
                    "cbgen",
                    u64::from(next_round),
                    layer_idx as u64,
                ),
            };
            let set = generate_codebooks(
                layer_idx as u16,
                next_round,
                public_grad.as_ref().map(|g| g[layer_idx].as_slice()),
                pseudo_pool.get(layer_idx).unwrap_or(&empty),
                self.codebooks.get(layer_idx),
                &gen_cfg,
            )?;
            sets.push(set);
        }
        Ok(sets)
    }

    fn client_update_pq(
        &self,
        client_idx: usize,
        round: u32,
        geometry: &[LayerGeometry],
    ) -> Result<ClientWork> {
        let z = local_train(
            &self.model,
            &self.arch,
            &self.fed.clients[client_idx],
            &self.train_cfg,
            derive_seed2(
                self.master_seed,
                "train",
                u64::from(round),
                client_idx as u64,
            ),
        )?;
        let mut layers = Vec::with_capacity(z.len());
        let mut squared_error = 0.0f64;
        let mut taus = Vec::with_capacity(z.len());
        let mut selections = Vec::with_capacity(z.len());
        for (layer_idx, layer_z) in z.iter().enumerate() {
            let set = &self.codebooks[layer_idx];
            let q = quantize_best(layer_z, set.codebooks())?;
            let residual_vec: Vec<f32> = layer_z
                .iter()
                .zip(&q.reconstruction)
                .map(|(&a, &b)| a - b)
                .collect();
            let residual = prune_residual(&residual_vec, self.cfg.residual_ratio)?;
            let (subvectors, _) = split_subvectors(layer_z, set.subvector_len())?;
            let pseudo = update_pseudo_centroids(
                set.codebook(usize::from(q.code.codebook_index)),
                &q.code,
                &subvectors,
                self.cfg.ema_factor,
            )?;
            let input_sq = grouped_norm_sq(layer_z, set.subvector_len());
            if input_sq > 0.0 {
                taus.push((q.squared_error / input_sq).sqrt());
            } else {
                taus.push(0.0);
            }
            squared_error += q.squared_error;
            selections.push(q.code.codebook_index);
            layers.push(LayerUpdate {
                code: q.code,
                residual,
                pseudo,
            });
        }
        let packet = ClientUpdatePacket { layers };
        let uplink_bytes = packet.to_bytes(geometry)?.len() as u64;
        Ok(ClientWork {
            client_id: client_idx as u64,
            packet: Some(packet),
            dense: None,
            uplink_bytes,
            squared_error,
            taus,
            selections,
        })
    }

    fn client_update_dense(&self, client_idx: usize, round: u32) -> Result<ClientWork> {
        let z = local_train(
            &self.model,
            &self.arch,
            &self.fed.clients[client_idx],
            &self.train_cfg,
            derive_seed2(
                self.master_seed,
                "train",
                u64::from(round),
                client_idx as u64,
            ),
        )?;
        let mut dense = Vec::with_capacity(z.len());
        let mut uplink = 0usize;
        let mut squared_error = 0.0f64;
        let mut taus = Vec::with_capacity(z.len());
        for (layer_idx, layer_z) in z.iter().enumerate() {
            let (recon, bytes): (Vec<f32>, usize) = match self.cfg.strategy {
                Strategy::ScalarQuant { bits } => {
                    let sq = baselines::scalar_quantize(layer_idx as u16, layer_z, bits)?;
                    let size = sq.wire_size();
                    (sq.reconstruct()?, size)
                }
                Strategy::TopK { ratio } => {
                    let s = baselines::topk_compress(layer_z, ratio)?;
                    let size = baselines::topk_wire_size(s.entries.len());
                    (s.densify(), size)
                }
                Strategy::Uncompressed => {
                    (layer_z.clone(), baselines::raw_wire_size(layer_z.len()))
                }
                Strategy::FedMpq | Strategy::Spq => unreachable!("pq path handled separately"),
            };
            let err: f64 = layer_z
                .iter()
                .zip(&recon)
                .map(|(&a, &b)| {
                    let d = f64::from(a) - f64::from(b);
                    d * d
                })
                .sum();
            let norm: f64 = layer_z.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
            taus.push(if norm > 0.0 { (err / norm).sqrt() } else { 0.0 });
            squared_error += err;
            uplink += bytes;
            dense.push(recon);
        }
        Ok(ClientWork {
            client_id: client_idx as u64,
            packet: None,
            dense: Some(dense),
            uplink_bytes: uplink as u64,
            squared_error,
            taus,
            selections: Vec::new(),
        })
    }

    /// Run one full round and report its metrics. Clients whose local
    /// step fails are dropped from the round.
    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let round = self.round;
        let sampled = self.sample_clients(round);
        let geometry = self.geometry();
        let uses_codebooks = self.cfg.strategy.uses_codebooks();

        // Pull: every sampled client downloads the model, plus the
        // current codebooks under PQ strategies.
        let codebook_bytes: usize = self.codebooks.iter().map(CodebookSet::wire_size).sum();
        let per_client_down =
            self.model.wire_size() + if uses_codebooks { codebook_bytes } else { 0 };
        let downlink_bytes = (per_client_down * sampled.len()) as u64;

        // Client update, in parallel over a read-only model snapshot.
        let work: Vec<Result<ClientWork>> = sampled
            .par_iter()
            .map(|&idx| {
                if uses_codebooks {
                    self.client_update_pq(idx, round, &geometry)
                } else {
                    self.client_update_dense(idx, round)
                }
            })
            .collect();
        let work: Vec<ClientWork> = work.into_iter().filter_map(|w| w.ok()).collect();
        if work.is_empty() {
            return Err(Error::EmptyAggregation);
        }
        let participants = work.len();

        // Push.
        let uplink_bytes: u64 = work.iter().map(|w| w.uplink_bytes).sum();

        // Metrics gathered on the way.
        let mean_quant_error =
            work.iter().map(|w| w.squared_error).sum::<f64>() / participants as f64;
        let all_taus: Vec<f64> = work.iter().flat_map(|w| w.taus.iter().copied()).collect();
        let tau_mean = all_taus.iter().sum::<f64>() / all_taus.len().max(1) as f64;
        let tau_max = all_taus.iter().copied().fold(0.0f64, f64::max);
        let num_layers = self.model.layers.len();
        let mut selection_histogram = vec![
            vec![0u32; self.cfg.effective_codebooks()];
            if uses_codebooks { num_layers } else { 0 }
        ];
        if uses_codebooks {
            for w in &work {
                for (layer_idx, &sel) in w.selections.iter().enumerate() {
                    selection_histogram[layer_idx][usize::from(sel)] += 1;
                }
            }
        }

        // Model update inside the trust boundary.
        if uses_codebooks {
            let mut agg = Aggregator::new(geometry.clone())?;
            for w in &work {
                agg.submit(w.client_id, w.packet.as_ref().expect("pq path"))?;
            }
            let out = agg.finalize(&self.codebooks)?;
            apply_server_update(&mut self.model, &out.mean_update, self.train_cfg.server_lr)?;
            self.round += 1;
            // Codebook update for the next round.
            self.codebooks = self.regenerate_codebooks(&out.pseudo_pool)?;
        } else {
            let lens = self.model.layer_lens();
            let mut agg = DenseAggregator::new(&lens)?;
            for w in &work {
                agg.submit(w.client_id, w.dense.as_ref().expect("dense path"))?;
            }
            let g = agg.finalize()?;
            apply_server_update(&mut self.model, &g, self.train_cfg.server_lr)?;
            self.round += 1;
        }

        self.ledger.record(uplink_bytes, downlink_bytes);
        let (accuracy, loss) = evaluate(&self.model, &self.arch, &self.fed.test_set)?;

        Ok(RoundMetrics {
            round: self.round,
            participants: participants as u32,
            accuracy,
            loss,
            mean_quant_error,
            tau_mean,
            tau_max,
            selection_histogram,
            uplink_bytes,
            downlink_bytes,
            cumulative_uplink_bytes: self.ledger.cumulative_uplink(),
            cumulative_downlink_bytes: self.ledger.cumulative_downlink(),
            weighted_total_cost: self.ledger.weighted_total(),
        })
    }
}
