//! Synthetic non-IID federations.
//!
//! Features are a Gaussian mixture with one component per class; label
//! skew across clients comes from per-client Dirichlet draws. The
//! server's public set can be interpolated between the global label
//! distribution and a single-class extreme to model distribution
//! mismatch.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// A flat labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, x: &[f32], y: u32) {
        debug_assert_eq!(x.len(), self.dim);
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    pub fn sample(&self, i: usize) -> (&[f32], u32) {
        (
            &self.features[i * self.dim..(i + 1) * self.dim],
            self.labels[i],
        )
    }

    pub fn label_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0usize; classes];
        for &y in &self.labels {
            h[y as usize] += 1;
        }
        h
    }

    /// CSV snapshot: `f0,..,f{dim-1},label` rows under a header. Floats
    /// use the shortest round-trip form, so read-back is lossless.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            let (x, y) = self.sample(i);
            for v in x {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{y}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty dataset csv".into()))?;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "dataset csv has no feature columns".into(),
            ));
        }
        let mut data = Self::new(dim);
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::InvalidConfig(format!(
                    "dataset csv row {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            let mut x = Vec::with_capacity(dim);
            for f in &fields[..dim] {
                x.push(f.parse::<f32>().map_err(|_| {
                    Error::InvalidConfig(format!("dataset csv row {}: bad float '{f}'", lineno + 2))
                })?);
            }
            let y = fields[dim].parse::<u32>().map_err(|_| {
                Error::InvalidConfig(format!(
                    "dataset csv row {}: bad label '{}'",
                    lineno + 2,
                    fields[dim]
                ))
            })?;
            data.push(&x, y);
        }
        Ok(data)
    }
}

/// Parameters of the synthetic federation.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub classes: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    /// Dirichlet concentration for per-client label proportions.
    pub alpha: f64,
    pub public_size: usize,
    /// 0 = public labels follow the global distribution, 1 = all one class.
    pub public_mismatch: f64,
    pub test_size: usize,
    /// Distance scale between class means.
    pub class_separation: f64,
    /// Feature noise standard deviation.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            n_clients: 100,
            classes: 5,
            dim: 16,
            samples_per_client: 40,
            alpha: 0.3,
            public_size: 20,
            public_mismatch: 0.0,
            test_size: 1000,
            class_separation: 3.0,
            feature_noise: 1.0,
            seed: 0,
        }
    }
}

/// The generated federation: disjoint client datasets plus the server's
/// public set and a held-out test set.
#[derive(Debug, Clone)]
pub struct FederationData {
    pub clients: Vec<Dataset>,
    pub public_set: Dataset,
    pub test_set: Dataset,
    pub classes: usize,
    /// Empirical label distribution pooled over all clients.
    pub global_label_distribution: Vec<f64>,
    /// Non-fatal generation diagnostics (e.g. class means too close to
    /// separate at the configured noise level).
    pub warnings: Vec<String>,
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, classes: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let mut draws: Vec<f64> = (0..classes).map(|_| gamma.sample(rng)).collect();
    let mut total: f64 = draws.iter().sum();
    if total <= 0.0 {
        // Extremely small alpha can underflow every draw; fall back to a
        // random one-hot, the Dirichlet limit.
        let hot = rng.random_range(0..classes);
        draws.fill(0.0);
        draws[hot] = 1.0;
        total = 1.0;
    }
    draws.iter_mut().for_each(|d| *d /= total);
    draws
}

fn sample_label(rng: &mut ChaCha8Rng, proportions: &[f64]) -> u32 {
    let mut target = rng.random::<f64>();
    for (i, &p) in proportions.iter().enumerate() {
        target -= p;
        if target <= 0.0 {
            return i as u32;
        }
    }
    (proportions.len() - 1) as u32
}

/// Generate a federation. All randomness derives from `cfg.seed`.
pub fn gen_synthetic_federation(cfg: &FederationConfig) -> Result<FederationData> {
    if cfg.n_clients == 0
        || cfg.classes == 0
        || cfg.dim == 0
        || cfg.samples_per_client == 0
        || cfg.test_size == 0
    {
        return Err(Error::InvalidConfig(
            "federation counts must be >= 1".into(),
        ));
    }
    if cfg.alpha <= 0.0 {
        return Err(Error::InvalidConfig("alpha must be > 0".into()));
    }
    if !(0.0..=1.0).contains(&cfg.public_mismatch) {
        return Err(Error::InvalidConfig(
            "public_mismatch must be in [0, 1]".into(),
        ));
    }

    // Class means: random directions scaled to the separation radius.
    let mut mean_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "means", 0));
    let unit = Normal::new(0.0f64, 1.0).unwrap();
    let means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| {
            let raw: Vec<f64> = (0..cfg.dim).map(|_| unit.sample(&mut mean_rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            raw.into_iter()
                .map(|v| v / norm * cfg.class_separation)
                .collect()
        })
        .collect();

    let mut warnings = Vec::new();
    let mut min_gap = f64::INFINITY;
    for a in 0..cfg.classes {
        for b in (a + 1)..cfg.classes {
            let gap: f64 = means[a]
                .iter()
                .zip(&means[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            min_gap = min_gap.min(gap);
        }
    }
    if cfg.classes > 1 && min_gap < 2.0 * cfg.feature_noise {
        warnings.push(format!(
            "closest class means are {min_gap:.3} apart at noise {}; classes will overlap",
            cfg.feature_noise
        ));
    }

    let noise = Normal::new(0.0f64, cfg.feature_noise).unwrap();
    let draw_sample = |rng: &mut ChaCha8Rng, y: u32| -> Vec<f32> {
        means[y as usize]
            .iter()
            .map(|&m| (m + noise.sample(rng)) as f32)
            .collect()
    };

    let mut clients = Vec::with_capacity(cfg.n_clients);
    let mut global_hist = vec![0usize; cfg.classes];
    for c in 0..cfg.n_clients {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "client", c as u64));
        let proportions = dirichlet(&mut rng, cfg.alpha, cfg.classes);
        let mut ds = Dataset::new(cfg.dim);
        for _ in 0..cfg.samples_per_client {
            let y = sample_label(&mut rng, &proportions);
            global_hist[y as usize] += 1;
            let x = draw_sample(&mut rng, y);
            ds.push(&x, y);
        }
        clients.push(ds);
    }
    let total: f64 = global_hist.iter().sum::<usize>() as f64;
    let global_label_distribution: Vec<f64> =
        global_hist.iter().map(|&h| h as f64 / total).collect();

    // Public set: interpolate between the (empirical) global label
    // distribution and all-class-zero.
    let mut public_set = Dataset::new(cfg.dim);
    {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "public", 0));
        let mm = cfg.public_mismatch;
        let proportions: Vec<f64> = global_label_distribution
            .iter()
            .enumerate()
            .map(|(i, &g)| (1.0 - mm) * g + if i == 0 { mm } else { 0.0 })
            .collect();
        for _ in 0..cfg.public_size {
            let y = sample_label(&mut rng, &proportions);
            let x = draw_sample(&mut rng, y);
            public_set.push(&x, y);
        }
    }

    let mut test_set = Dataset::new(cfg.dim);
    {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "test", 0));
        for _ in 0..cfg.test_size {
            let y = rng.random_range(0..cfg.classes as u32);
            let x = draw_sample(&mut rng, y);
            test_set.push(&x, y);
        }
    }

    Ok(FederationData {
        clients,
        public_set,
        test_set,
        classes: cfg.classes,
        global_label_distribution,
        warnings,
    })
}
