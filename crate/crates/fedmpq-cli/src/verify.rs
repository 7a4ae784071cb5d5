//! Built-in self checks, runnable without the test harness.
//!
//! Each check re-derives its expectation from a naive in-place oracle
//! and prints one PASS/FAIL line. Returns how many checks failed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedmpq::codebooks::{kmeans, CodebookSet, KMeansConfig};
use fedmpq::pq::packing::{pack_bits, unpack_bits};
use fedmpq::pq::quantize::grouped_norm_sq;
use fedmpq::pq::{
    dequantize, prune_residual, quantize_best, quantize_with_codebook, ClientUpdatePacket,
    Codebook, LayerGeometry, LayerUpdate, PseudoCentroidSet,
};
use fedmpq::secure_agg::Aggregator;

fn random_codebook(rng: &mut ChaCha8Rng, index: u8, k: usize, d: usize) -> Codebook {
    let rows: Vec<Vec<f32>> = (0..k)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    Codebook::from_rows(0, index, &rows)
        .unwrap()
        .enforce_zero_codeword()
}

fn check(name: &str, ok: bool, failures: &mut usize) {
    if ok {
        println!("PASS {name}");
    } else {
        println!("FAIL {name}");
        *failures += 1;
    }
}

pub fn run_verify() -> usize {
    let mut failures = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);

    // Bit packing round-trips against random widths.
    let mut ok = true;
    for _ in 0..500 {
        let bits = rng.random_range(1..=16u32);
        let count = rng.random_range(1..=48usize);
        let mask = if bits == 16 {
            u16::MAX
        } else {
            (1 << bits) - 1
        };
        let values: Vec<u16> = (0..count).map(|_| rng.random::<u16>() & mask).collect();
        let packed = pack_bits(&values, bits).unwrap();
        if unpack_bits(&packed, bits, count).unwrap() != values {
            ok = false;
            break;
        }
    }
    check(
        "pack/unpack round-trip (500 random widths)",
        ok,
        &mut failures,
    );

    // Nearest-codeword search against a naive scan.
    let mut ok = true;
    for _ in 0..300 {
        let d = rng.random_range(1..=4usize);
        let k = 1usize << rng.random_range(1..=3u32);
        let cb = random_codebook(&mut rng, 0, k, d);
        let len = rng.random_range(1..=16usize);
        let z: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let q = quantize_with_codebook(&z, &cb).unwrap();
        for (chunk, &code) in z.chunks(d).zip(&q.code.codes) {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for i in 0..k {
                let mut dist = 0.0f64;
                for (j, &c) in cb.codeword(i).iter().enumerate() {
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
            if best as u16 != code {
                ok = false;
            }
        }
    }
    check(
        "nearest-codeword argmin vs naive scan (300 vectors)",
        ok,
        &mut failures,
    );

    // Contraction against zero-codeword codebooks.
    let mut ok = true;
    for _ in 0..2000 {
        let d = rng.random_range(1..=6usize);
        let k = 1usize << rng.random_range(0..=4u32);
        let cb = random_codebook(&mut rng, 0, k, d);
        let len = rng.random_range(1..=48usize);
        let z: Vec<f32> = (0..len).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        let q = quantize_with_codebook(&z, &cb).unwrap();
        if q.squared_error > grouped_norm_sq(&z, d) {
            ok = false;
        }
    }
    check(
        "tau-contraction (2000 vectors, zero violations)",
        ok,
        &mut failures,
    );

    // Compressed-domain aggregation equals reconstruct-then-average.
    let mut ok = true;
    for _ in 0..20 {
        let d = rng.random_range(1..=4usize);
        let k = 1usize << rng.random_range(1..=3u32);
        let m = rng.random_range(1..=3usize);
        let len = rng.random_range(4..=64u32);
        let n = rng.random_range(1..=8usize);
        let cbs: Vec<Codebook> = (0..m)
            .map(|i| random_codebook(&mut rng, i as u8, k, d))
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
        let mut naive = vec![0.0f64; len as usize];
        for client in 0..n {
            let z: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let q = quantize_best(&z, set.codebooks()).unwrap();
            let residual_vec: Vec<f32> = z
                .iter()
                .zip(&q.reconstruction)
                .map(|(&a, &b)| a - b)
                .collect();
            let residual = prune_residual(&residual_vec, 0.1).unwrap();
            let deq =
                dequantize(&q.code, set.codebook(usize::from(q.code.codebook_index))).unwrap();
            for (o, (&a, &b)) in naive.iter_mut().zip(deq.iter().zip(&residual.densify())) {
                *o += f64::from(a) + f64::from(b);
            }
            let half = k / 2;
            agg.submit(
                client as u64,
                &ClientUpdatePacket {
                    layers: vec![LayerUpdate {
                        code: q.code.clone(),
                        residual,
                        pseudo: PseudoCentroidSet {
                            layer_id: 0,
                            source_codebook_index: q.code.codebook_index,
                            centroids: vec![0.0; half * d],
                            usage_counts: vec![0; half],
                            subvector_len: d,
                        },
                    }],
                },
            )
            .unwrap();
        }
        let g = agg.finalize(&[set]).unwrap().mean_update;
        for (&got, &s) in g[0].iter().zip(&naive) {
            let want = s / n as f64;
            if (f64::from(got) - want).abs() > 1e-5 * want.abs().max(1e-3) {
                ok = false;
            }
        }
    }
    check(
        "compressed-domain aggregation vs naive average (20 sessions)",
        ok,
        &mut failures,
    );

    // k-means: deterministic and non-increasing inertia.
    let points: Vec<Vec<f32>> = (0..40)
        .map(|i| {
            let base = if i % 2 == 0 { -3.0 } else { 3.0 };
            vec![base + (i as f32) * 0.01, base - (i as f32) * 0.01]
        })
        .collect();
    let a = kmeans::kmeans(&points, None, &KMeansConfig::new(4, 7)).unwrap();
    let b = kmeans::kmeans(&points, None, &KMeansConfig::new(4, 7)).unwrap();
    let deterministic = a.centroids == b.centroids;
    let monotone = a
        .inertia_trace
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    check(
        "k-means determinism and inertia monotonicity",
        deterministic && monotone,
        &mut failures,
    );

    failures
}
