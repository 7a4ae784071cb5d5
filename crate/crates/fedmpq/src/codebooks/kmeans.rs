//! Deterministic weighted k-means with k-means++ initialization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            max_iters: 25,
            seed,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f32>>,
    /// Weighted sum of squared distances at the final assignment.
    pub inertia: f64,
    /// Inertia recorded after each assignment step, non-increasing.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

fn dist_sq(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let diff = f64::from(x) - f64::from(y);
        s += diff * diff;
    }
    s
}

/// Sample an index proportionally to `weights` (assumed nonnegative with
/// positive total).
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        target -= w;
        if target <= 0.0 && w > 0.0 {
            return i;
        }
    }
    // Rounding pushed us past the end; take the last positive weight.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Lloyd's algorithm over `points`, optionally weighted. Deterministic
/// for a fixed seed. Empty clusters are re-seeded to the point farthest
/// from its assigned centroid. With fewer distinct points than clusters
/// the result may contain duplicate centroids; a warning records this.
pub fn kmeans(
    points: &[Vec<f32>],
    weights: Option<&[f64]>,
    cfg: &KMeansConfig,
) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::InvalidConfig(
            "k-means needs at least one point".into(),
        ));
    }
    if cfg.clusters == 0 || cfg.max_iters == 0 || cfg.tol < 0.0 {
        return Err(Error::InvalidConfig(
            "k-means config: clusters >= 1, max_iters >= 1, tol >= 0".into(),
        ));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("points of differing dimension".into()));
    }
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(Error::ShapeMismatch("one weight per point required".into()));
        }
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "weights must be finite and nonnegative".into(),
            ));
        }
    }

    let mut warnings = Vec::new();
    let mut eff_weights: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; points.len()],
    };
    if eff_weights.iter().sum::<f64>() <= 0.0 {
        warnings.push("all weights zero; falling back to uniform".into());
        eff_weights.fill(1.0);
    }

    {
        let mut distinct = 0usize;
        let mut seen: Vec<&[f32]> = Vec::new();
        for p in points {
            if !seen.contains(&p.as_slice()) {
                seen.push(p);
                distinct += 1;
                if distinct >= cfg.clusters {
                    break;
                }
            }
        }
        if distinct < cfg.clusters {
            warnings.push(format!(
                "only {distinct} distinct points for {} clusters; duplicate centroids possible",
                cfg.clusters
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = init_plus_plus(points, &eff_weights, cfg.clusters, &mut rng);

    let mut assignment = vec![0usize; points.len()];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0usize;

    for _ in 0..cfg.max_iters {
        iterations += 1;

        // Assignment step.
        let mut inertia = 0.0f64;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dist_sq(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
            inertia += eff_weights[i] * best_d;
        }
        if let Some(&prev) = inertia_trace.last() {
            debug_assert!(
                inertia <= prev * (1.0 + 1e-9) + 1e-12,
                "inertia increased: {prev} -> {inertia}"
            );
        }
        inertia_trace.push(inertia);

        // Update step: weighted means.
        let mut sums = vec![vec![0.0f64; dim]; centroids.len()];
        let mut mass = vec![0.0f64; centroids.len()];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            mass[c] += eff_weights[i];
            for (acc, &v) in sums[c].iter_mut().zip(p) {
                *acc += eff_weights[i] * f64::from(v);
            }
        }

        // Re-seed empty clusters to the farthest points, one per cluster.
        let empties: Vec<usize> = (0..centroids.len()).filter(|&c| mass[c] <= 0.0).collect();
        if !empties.is_empty() {
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| {
                let da = dist_sq(&points[a], &centroids[assignment[a]]);
                let db = dist_sq(&points[b], &centroids[assignment[b]]);
                db.total_cmp(&da).then(a.cmp(&b))
            });
            for (slot, &c) in empties.iter().enumerate() {
                let pick = &points[order[slot % order.len()]];
                sums[c] = pick.iter().map(|&v| f64::from(v)).collect();
                mass[c] = 1.0;
            }
        }

        let mut movement = 0.0f64;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut moved = 0.0f64;
            for (j, v) in centroid.iter_mut().enumerate() {
                let new = (sums[c][j] / mass[c]) as f32;
                let delta = f64::from(new) - f64::from(*v);
                moved += delta * delta;
                *v = new;
            }
            movement = movement.max(moved.sqrt());
        }
        if movement < cfg.tol {
            break;
        }
    }

    // Final assignment for the reported inertia.
    let mut inertia = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        let mut best_d = f64::INFINITY;
        for centroid in &centroids {
            let d = dist_sq(p, centroid);
            if d < best_d {
                best_d = d;
            }
        }
        inertia += eff_weights[i] * best_d;
    }

    Ok(KMeansResult {
        centroids,
        inertia,
        inertia_trace,
        iterations,
        warnings,
    })
}

/// k-means++: first pick weight-proportional, then weight times squared
/// distance to the nearest chosen centroid. When every remaining point
/// coincides with a chosen centroid, fall back to weight-proportional
/// picks (duplicates allowed).
fn init_plus_plus(
    points: &[Vec<f32>],
    weights: &[f64],
    clusters: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f32>> {
    let mut centroids: Vec<Vec<f32>> = Vec::with_capacity(clusters);
    let first = weighted_pick(rng, weights);
    centroids.push(points[first].clone());

    let mut min_d: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < clusters {
        let scores: Vec<f64> = min_d.iter().zip(weights).map(|(&d, &w)| d * w).collect();
        let pick = if scores.iter().sum::<f64>() > 0.0 {
            weighted_pick(rng, &scores)
        } else {
            weighted_pick(rng, weights)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            let d = dist_sq(p, centroids.last().unwrap());
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    centroids
}
