//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers. Run with
//! `cargo test -p fedmpq --test acceptance -- --nocapture`.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedmpq::codebooks::CodebookSet;
use fedmpq::learning::{
    gen_synthetic_federation, loss_and_grad, Dataset, FederationConfig, ModelArch, TrainConfig,
};
use fedmpq::pq::packing::{pack_bits, packed_len};
use fedmpq::pq::quantize::grouped_norm_sq;
use fedmpq::pq::{
    dequantize, prune_residual, quantize_best, quantize_with_codebook, split_subvectors,
    update_pseudo_centroids, ClientUpdatePacket, Codebook, LayerGeometry, LayerUpdate,
    PseudoCentroidSet,
};
use fedmpq::secure_agg::Aggregator;
use fedmpq::sim::{run_experiment, RoundConfig, Simulation, StopRule, Strategy};

fn random_codebook(rng: &mut ChaCha8Rng, layer: u16, index: u8, k: usize, d: usize) -> Codebook {
    let rows: Vec<Vec<f32>> = (0..k)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    Codebook::from_rows(layer, index, &rows)
        .unwrap()
        .enforce_zero_codeword()
}

fn pseudo_for(cb: &Codebook, code: &fedmpq::pq::QuantizationCode, z: &[f32]) -> PseudoCentroidSet {
    let subs = split_subvectors(z, cb.subvector_len()).unwrap().0;
    update_pseudo_centroids(cb, code, &subs, 0.99).unwrap()
}

/// Criterion 1: aggregation commutes with decompression. 100 random
/// configurations; the compressed-domain mean must match the mean of
/// per-client reconstructions within 1e-5 relative, with exact count
/// matrices against a brute-force one-hot oracle.
#[test]
fn criterion_1_exchange_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    for case in 0..100u32 {
        let n_clients = rng.random_range(1..=16usize);
        let len = rng.random_range(8..=512u32);
        let m = rng.random_range(1..=4usize);
        let k = 1usize << rng.random_range(1..=4u32);
        let d = rng.random_range(1..=8usize);
        let rho = [0.0, 0.01, 0.1, 1.0][rng.random_range(0..4usize)];

        let geom = LayerGeometry {
            layer_id: 0,
            len,
            num_codebooks: m,
            codebook_size: k,
            subvector_len: d,
        };
        let cbs: Vec<Codebook> = (0..m)
            .map(|i| random_codebook(&mut rng, 0, i as u8, k, d))
            .collect();
        let set = CodebookSet::new(0, 0, cbs).unwrap();

        let mut agg = Aggregator::new(vec![geom]).unwrap();
        let mut naive_sum = vec![0.0f64; len as usize];
        // Oracle count matrices: one-hot sums per codebook.
        let rows = geom.code_count();
        let mut oracle_counts = vec![vec![0u32; rows * k]; m];

        for client in 0..n_clients {
            let z: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let q = quantize_best(&z, set.codebooks()).unwrap();
            let residual_vec: Vec<f32> = z
                .iter()
                .zip(&q.reconstruction)
                .map(|(&a, &b)| a - b)
                .collect();
            let residual = prune_residual(&residual_vec, rho).unwrap();
            for (row, &c) in q.code.codes.iter().enumerate() {
                oracle_counts[usize::from(q.code.codebook_index)][row * k + usize::from(c)] += 1;
            }
            let reconstruction =
                dequantize(&q.code, set.codebook(usize::from(q.code.codebook_index))).unwrap();
            let dense = residual.densify();
            for (o, (&a, &b)) in naive_sum.iter_mut().zip(reconstruction.iter().zip(&dense)) {
                *o += f64::from(a) + f64::from(b);
            }
            let pseudo = pseudo_for(
                set.codebook(usize::from(q.code.codebook_index)),
                &q.code,
                &z,
            );
            let packet = ClientUpdatePacket {
                layers: vec![LayerUpdate {
                    code: q.code,
                    residual,
                    pseudo,
                }],
            };
            agg.submit(client as u64, &packet).unwrap();
        }

        let schema = vec![geom];
        let (aggregate, _) = agg.into_aggregate().unwrap();
        for (cb, oracle) in oracle_counts.iter().enumerate() {
            assert_eq!(
                aggregate.layers[0].counts(cb),
                oracle.as_slice(),
                "case {case}: count matrix differs"
            );
        }
        let g = fedmpq::secure_agg::reconstruct(&aggregate, &schema, &[set]).unwrap();
        for (j, (&got, &s)) in g[0].iter().zip(&naive_sum).enumerate() {
            let want = s / n_clients as f64;
            let tol = 1e-5 * want.abs().max(1e-3);
            assert!(
                (f64::from(got) - want).abs() <= tol,
                "case {case} position {j}: {got} vs {want}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "exceeded 10 s: {elapsed:?}");
    println!("criterion 1 PASS: exchange identity on 100 random configs in {elapsed:.2?}");
}

/// Criterion 2: quantization against a zero-codeword codebook never
/// expands a vector. 10,000 random vectors, zero violations.
#[test]
fn criterion_2_tau_contraction() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut strict = 0usize;
    for case in 0..10_000u32 {
        let d = rng.random_range(1..=8usize);
        let k = 1usize << rng.random_range(0..=5u32);
        let len = rng.random_range(1..=64usize);
        let cb = random_codebook(&mut rng, 0, 0, k, d);
        let scale = 10f32.powi(rng.random_range(-2..3));
        let z: Vec<f32> = (0..len)
            .map(|_| rng.random_range(-1.0f32..1.0) * scale)
            .collect();
        let q = quantize_with_codebook(&z, &cb).unwrap();
        let input_sq = grouped_norm_sq(&z, d);
        assert!(
            q.squared_error <= input_sq,
            "case {case}: ||Q(x)-x||^2 = {} > ||x||^2 = {}",
            q.squared_error,
            input_sq
        );
        if q.squared_error < input_sq {
            strict += 1;
        }
        // Flat f64 recompute from the reconstruction agrees with the
        // grouped accumulation.
        let flat: f64 = z
            .iter()
            .zip(&q.reconstruction)
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
            .sum();
        assert!((flat - q.squared_error).abs() <= 1e-9 * flat.max(1.0));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "exceeded 5 s: {elapsed:?}");
    println!(
        "criterion 2 PASS: tau-contraction held on 10000/10000 vectors ({strict} strict) in {elapsed:.2?}"
    );
}

fn trend_fed_cfg(seed: u64) -> FederationConfig {
    FederationConfig {
        n_clients: 100,
        classes: 5,
        dim: 16,
        samples_per_client: 40,
        alpha: 0.3,
        public_size: 20,
        public_mismatch: 0.7,
        test_size: 1000,
        class_separation: 3.0,
        feature_noise: 1.0,
        seed,
    }
}

fn trend_arch() -> ModelArch {
    ModelArch::Mlp {
        dim: 16,
        hidden: 24,
        classes: 5,
    }
}

fn trend_train_cfg() -> TrainConfig {
    TrainConfig {
        client_lr: 0.6,
        server_lr: 1.0,
        local_epochs: 1,
        batch_size: 10,
    }
}

fn trend_round_cfg(target: Option<f64>) -> RoundConfig {
    RoundConfig {
        clients_per_round: 10,
        num_codebooks: 4,
        codebook_size: 32,
        subvector_len: 2,
        residual_ratio: 0.001,
        strategy: Strategy::FedMpq,
        rounds: 60,
        target_accuracy: target,
        use_public_data: true,
        ..Default::default()
    }
}

fn trend_run(seed: u64, cfg: RoundConfig, stop: StopRule) -> fedmpq::sim::ExperimentResult {
    let fed = gen_synthetic_federation(&trend_fed_cfg(seed)).unwrap();
    let mut sim = Simulation::new(trend_arch(), fed, trend_train_cfg(), cfg, seed).unwrap();
    run_experiment(&mut sim, stop).unwrap()
}

fn mean_rounds(rounds: &[Option<u32>]) -> f64 {
    assert!(
        rounds.iter().all(Option::is_some),
        "a run never reached the target: {rounds:?}"
    );
    rounds.iter().map(|r| f64::from(r.unwrap())).sum::<f64>() / rounds.len() as f64
}

/// Criterion 3: with the full residual uploaded, the compressed run
/// reproduces the uncompressed trajectory within 1e-5 relative
/// parameter distance over 20 rounds.
#[test]
fn criterion_3_lossless_limit() {
    let start = Instant::now();
    let seed = 42u64;
    let mk = |strategy| RoundConfig {
        residual_ratio: 1.0,
        strategy,
        rounds: 20,
        target_accuracy: None,
        ..trend_round_cfg(None)
    };
    let fed = gen_synthetic_federation(&trend_fed_cfg(seed)).unwrap();
    let mut compressed = Simulation::new(
        trend_arch(),
        fed.clone(),
        trend_train_cfg(),
        mk(Strategy::FedMpq),
        seed,
    )
    .unwrap();
    let mut reference = Simulation::new(
        trend_arch(),
        fed,
        trend_train_cfg(),
        mk(Strategy::Uncompressed),
        seed,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        compressed.run_round().unwrap();
        reference.run_round().unwrap();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (a, b) in compressed
            .model()
            .layers
            .iter()
            .zip(&reference.model().layers)
        {
            for (&x, &y) in a.values.iter().zip(&b.values) {
                num += (f64::from(x) - f64::from(y)).powi(2);
                den += f64::from(y) * f64::from(y);
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    assert!(worst <= 1e-5, "relative parameter distance {worst}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "exceeded 1 min: {elapsed:?}");
    println!(
        "criterion 3 PASS: lossless limit within {worst:.3e} relative over 20 rounds in {elapsed:.2?}"
    );
}

/// Criterion 4: byte-exact packet accounting for L=1024, D=4, K=8,
/// rho=0.01 against the analytic layout, and the exact ratio against a
/// 4096-byte raw layer.
#[test]
fn criterion_4_compression_accounting() {
    let (len, d, k, rho) = (1024u32, 4usize, 8usize, 0.01f64);
    let geom = LayerGeometry {
        layer_id: 0,
        len,
        num_codebooks: 2,
        codebook_size: k,
        subvector_len: d,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let cbs: Vec<Codebook> = (0..2)
        .map(|i| random_codebook(&mut rng, 0, i as u8, k, d))
        .collect();
    let set = CodebookSet::new(0, 0, cbs).unwrap();
    let z: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();

    let q = quantize_best(&z, set.codebooks()).unwrap();
    let residual_vec: Vec<f32> = z
        .iter()
        .zip(&q.reconstruction)
        .map(|(&a, &b)| a - b)
        .collect();
    let residual = prune_residual(&residual_vec, rho).unwrap();
    let pseudo = pseudo_for(
        set.codebook(usize::from(q.code.codebook_index)),
        &q.code,
        &z,
    );
    let packet = ClientUpdatePacket {
        layers: vec![LayerUpdate {
            code: q.code,
            residual,
            pseudo,
        }],
    };
    let bytes = packet.to_bytes(&[geom]).unwrap();

    // Analytic layout: 11-byte header, 256 codes at 3 bits = 96 bytes,
    // ceil(0.01 * 1024) = 11 residual entries at 8 bytes = 88 bytes,
    // pseudo-centroid block 4*4*4 + 4*4 = 80 bytes.
    assert_eq!(packed_len(len, d, k), 96);
    let expected = 11 + 96 + 88 + 80;
    assert_eq!(expected, 275);
    assert_eq!(bytes.len(), expected);
    assert_eq!(geom.layer_wire_size(11), expected);
    assert_eq!(packet.wire_size(&[geom]), expected);

    let raw_bytes = 4 * len as usize;
    assert_eq!(raw_bytes, 4096);
    let measured_ratio = bytes.len() as f64 / raw_bytes as f64;
    let analytic_ratio = 275.0 / 4096.0;
    assert_eq!(measured_ratio, analytic_ratio);
    println!(
        "criterion 4 PASS: packet is exactly {expected} bytes ({measured_ratio:.5} of a 4096-byte raw layer, {:.2}x compression)",
        1.0 / measured_ratio
    );
}

/// Criterion 5: desk-scale trend suite over 5 seeds on the synthetic
/// non-IID task (100 clients, Dirichlet alpha 0.3, mismatched 20-sample
/// public set). Targets are 90% of the per-seed uncompressed peak.
#[test]
fn criterion_5_trend_suite() {
    let start = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];
    let capacities = [(8usize, 4usize, 4usize), (8, 8, 4), (8, 16, 4), (4, 32, 2)];
    let rhos = [0.0f64, 0.001, 0.01, 0.05];

    let mut unc_peaks = Vec::new();
    let mut fm_peaks = Vec::new();
    let mut fm_rounds = Vec::new();
    let mut spq_rounds = Vec::new();
    let mut cap_rounds = vec![Vec::new(); capacities.len()];
    let mut rho_rounds = vec![Vec::new(); rhos.len()];
    let mut nopub_rounds = Vec::new();

    for &seed in &seeds {
        // Uncompressed reference defines the per-seed target.
        let mut unc_cfg = trend_round_cfg(None);
        unc_cfg.strategy = Strategy::Uncompressed;
        unc_cfg.rounds = 40;
        let unc = trend_run(seed, unc_cfg, StopRule::FixedRounds);
        let target = 0.9 * unc.summary.peak_accuracy;
        unc_peaks.push(unc.summary.peak_accuracy);

        // (a) headline configuration, full budget for the peak.
        let mut cfg = trend_round_cfg(Some(target));
        cfg.rounds = 40;
        let fm = trend_run(seed, cfg, StopRule::FixedRounds);
        fm_peaks.push(fm.summary.peak_accuracy);
        fm_rounds.push(fm.summary.rounds_to_target);

        // (b) single-codebook public-data baseline.
        let mut cfg = trend_round_cfg(Some(target));
        cfg.strategy = Strategy::Spq;
        spq_rounds.push(
            trend_run(seed, cfg, StopRule::StopAtTarget)
                .summary
                .rounds_to_target,
        );

        // (c) codebook capacity sweep.
        for (slot, &(m, k, d)) in capacities.iter().enumerate() {
            let mut cfg = trend_round_cfg(Some(target));
            cfg.num_codebooks = m;
            cfg.codebook_size = k;
            cfg.subvector_len = d;
            cap_rounds[slot].push(
                trend_run(seed, cfg, StopRule::StopAtTarget)
                    .summary
                    .rounds_to_target,
            );
        }

        // (d) residual-ratio ablation at (8, 8, 4).
        for (slot, &rho) in rhos.iter().enumerate() {
            let mut cfg = trend_round_cfg(Some(target));
            cfg.num_codebooks = 8;
            cfg.codebook_size = 8;
            cfg.subvector_len = 4;
            cfg.residual_ratio = rho;
            rho_rounds[slot].push(
                trend_run(seed, cfg, StopRule::StopAtTarget)
                    .summary
                    .rounds_to_target,
            );
        }

        // (e) no public data, public codebook slot dropped.
        let mut cfg = trend_round_cfg(Some(target));
        cfg.num_codebooks = 3;
        cfg.use_public_data = false;
        cfg.rounds = 80;
        nopub_rounds.push(
            trend_run(seed, cfg, StopRule::StopAtTarget)
                .summary
                .rounds_to_target,
        );
    }

    // (a) peak accuracy within 95% of uncompressed, every seed.
    for (seed, (&fm, &unc)) in seeds.iter().zip(fm_peaks.iter().zip(&unc_peaks)) {
        assert!(
            fm >= 0.95 * unc,
            "seed {seed}: fedmpq peak {fm} < 95% of uncompressed {unc}"
        );
    }

    // (b) fedmpq at least as fast as spq on average.
    let fm_mean = mean_rounds(&fm_rounds);
    let spq_mean = mean_rounds(&spq_rounds);
    assert!(
        fm_mean <= spq_mean,
        "fedmpq mean {fm_mean} > spq mean {spq_mean}"
    );

    // (c) non-increasing rounds-to-target with growing capacity.
    let cap_means: Vec<f64> = cap_rounds.iter().map(|r| mean_rounds(r)).collect();
    for w in cap_means.windows(2) {
        assert!(w[1] <= w[0], "capacity trend not monotone: {cap_means:?}");
    }

    // (d) every nonzero residual ratio at least as fast as rho = 0, and
    // the {0, 0.01, 0.05} chain non-increasing.
    let rho_means: Vec<f64> = rho_rounds.iter().map(|r| mean_rounds(r)).collect();
    for (slot, &mean) in rho_means.iter().enumerate().skip(1) {
        assert!(
            mean <= rho_means[0],
            "rho {} mean {mean} > rho=0 mean {}",
            rhos[slot],
            rho_means[0]
        );
    }
    assert!(rho_means[2] <= rho_means[0] && rho_means[3] <= rho_means[2]);

    // (e) without public data the run still converges but needs at
    // least 1.5x the rounds.
    let nopub_mean = mean_rounds(&nopub_rounds);
    assert!(
        nopub_mean >= 1.5 * fm_mean,
        "w/o public data mean {nopub_mean} < 1.5x full method {fm_mean}"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1800.0,
        "exceeded 30 min: {elapsed:?}"
    );
    println!(
        "criterion 5 PASS in {elapsed:.1?}: (a) peaks {fm_peaks:.3?} vs uncompressed {unc_peaks:.3?}; (b) fedmpq {fm_mean:.2} <= spq {spq_mean:.2}; (c) capacity means {cap_means:.2?}; (d) rho means {rho_means:.2?}; (e) w/o public {nopub_mean:.2} >= 1.5x {fm_mean:.2}"
    );
}

/// Criterion 6: implementation-vs-oracle equivalences, exact on 1000
/// random small instances each.
#[test]
fn criterion_6_oracle_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);

    // (a) argmin quantization vs exhaustive search.
    for _ in 0..1000 {
        let d = rng.random_range(1..=4usize);
        let k = 1usize << rng.random_range(0..=3u32);
        let len = rng.random_range(1..=24usize);
        let cb = random_codebook(&mut rng, 0, 0, k, d);
        let z: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let q = quantize_with_codebook(&z, &cb).unwrap();
        // Exhaustive oracle with identically ordered arithmetic.
        let mut oracle = Vec::new();
        for chunk in z.chunks(d) {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for i in 0..k {
                let cw = cb.codeword(i);
                let mut dist = 0.0f64;
                for (j, &c) in cw.iter().enumerate() {
                    let v = if j < chunk.len() {
                        f64::from(chunk[j])
                    } else {
                        0.0
                    };
                    dist += (v - f64::from(c)) * (v - f64::from(c));
                }
                if dist < best_d {
                    best_d = dist;
                    best = i;
                }
            }
            oracle.push(best as u16);
        }
        assert_eq!(q.code.codes, oracle);
    }

    // (b) one-hot accumulation vs naive reconstruct-then-average, exact
    // on dyadic inputs where every f64 sum is exact.
    for _ in 0..1000 {
        let d = rng.random_range(1..=4usize);
        let k = 1usize << rng.random_range(1..=3u32);
        let m = rng.random_range(1..=3usize);
        let len = rng.random_range(2..=32u32);
        let n_clients = rng.random_range(1..=16usize);
        let dyadic = |rng: &mut ChaCha8Rng| rng.random_range(-512i32..=512) as f32 / 64.0;
        let cbs: Vec<Codebook> = (0..m)
            .map(|i| {
                let rows: Vec<Vec<f32>> = (0..k)
                    .map(|_| (0..d).map(|_| dyadic(&mut rng)).collect())
                    .collect();
                Codebook::from_rows(0, i as u8, &rows).unwrap()
            })
            .collect();
        let set = CodebookSet::new(0, 0, cbs).unwrap();
        let geom = LayerGeometry {
            layer_id: 0,
            len,
            num_codebooks: m,
            codebook_size: k,
            subvector_len: d,
        };
        let mut agg = Aggregator::new(vec![geom]).unwrap();
        let mut naive_sum = vec![0.0f64; len as usize];
        for client in 0..n_clients {
            let z: Vec<f32> = (0..len).map(|_| dyadic(&mut rng)).collect();
            let q = quantize_best(&z, set.codebooks()).unwrap();
            let residual_vec: Vec<f32> = z
                .iter()
                .zip(&q.reconstruction)
                .map(|(&a, &b)| a - b)
                .collect();
            let residual = prune_residual(&residual_vec, 0.25).unwrap();
            let reconstruction =
                dequantize(&q.code, set.codebook(usize::from(q.code.codebook_index))).unwrap();
            for (o, (&a, &b)) in naive_sum
                .iter_mut()
                .zip(reconstruction.iter().zip(&residual.densify()))
            {
                *o += f64::from(a) + f64::from(b);
            }
            let pseudo = pseudo_for(
                set.codebook(usize::from(q.code.codebook_index)),
                &q.code,
                &z,
            );
            agg.submit(
                client as u64,
                &ClientUpdatePacket {
                    layers: vec![LayerUpdate {
                        code: q.code,
                        residual,
                        pseudo,
                    }],
                },
            )
            .unwrap();
        }
        let g = agg.finalize(&[set]).unwrap().mean_update;
        for (&got, &s) in g[0].iter().zip(&naive_sum) {
            let want = (s / n_clients as f64) as f32;
            assert_eq!(got.to_bits(), want.to_bits(), "one-hot route diverged");
        }
    }

    // (c) bit packing vs a naive per-bit writer.
    for _ in 0..1000 {
        let bits = rng.random_range(1..=16u32);
        let count = rng.random_range(1..=64usize);
        let mask = if bits == 16 {
            u16::MAX
        } else {
            (1u16 << bits) - 1
        };
        let values: Vec<u16> = (0..count).map(|_| rng.random::<u16>() & mask).collect();
        let packed = pack_bits(&values, bits).unwrap();
        let mut bitstream: Vec<bool> = Vec::new();
        for &v in &values {
            for b in 0..bits {
                bitstream.push((v >> b) & 1 == 1);
            }
        }
        while !bitstream.len().is_multiple_of(8) {
            bitstream.push(false);
        }
        let naive: Vec<u8> = bitstream
            .chunks(8)
            .map(|byte| {
                byte.iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &bit)| acc | (u8::from(bit) << i))
            })
            .collect();
        assert_eq!(packed, naive);
    }

    println!("criterion 6 PASS: argmin, one-hot aggregation, and bit packing match their oracles exactly (1000 instances each)");
}

/// Criterion 7: analytic gradients vs central finite differences within
/// 1e-4 relative on 100 random instances.
#[test]
fn criterion_7_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let mut worst = 0.0f64;
    for case in 0..100u32 {
        let classes = rng.random_range(2..=5usize);
        let dim = rng.random_range(1..=5usize);
        let arch = if case % 2 == 0 {
            ModelArch::Logistic { dim, classes }
        } else {
            ModelArch::Mlp {
                dim,
                hidden: rng.random_range(2..=6usize),
                classes,
            }
        };
        let params: Vec<Vec<f64>> = arch
            .layer_specs()
            .iter()
            .map(|(_, shape)| {
                (0..shape.iter().product::<usize>())
                    .map(|_| rng.random_range(-0.8..0.8))
                    .collect()
            })
            .collect();
        let mut data = Dataset::new(dim);
        for _ in 0..rng.random_range(1..=5usize) {
            let x: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            data.push(&x, rng.random_range(0..classes as u32));
        }
        let indices: Vec<usize> = (0..data.len()).collect();
        let (_, grads) = loss_and_grad(&arch, &params, &data, &indices).unwrap();
        let h = 1e-5;
        for l in 0..params.len() {
            for i in 0..params[l].len() {
                let mut plus = params.clone();
                plus[l][i] += h;
                let mut minus = params.clone();
                minus[l][i] -= h;
                let (lp, _) = loss_and_grad(&arch, &plus, &data, &indices).unwrap();
                let (lm, _) = loss_and_grad(&arch, &minus, &data, &indices).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(grads[l][i].abs()).max(1e-6);
                let rel = (fd - grads[l][i]).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "case {case} layer {l} index {i}: relative {rel}"
                );
                worst = worst.max(rel);
            }
        }
    }
    println!(
        "criterion 7 PASS: gradient check on 100 instances, worst relative difference {worst:.2e}"
    );
}
