//! Experiment specification: a flat key-value config with CLI overrides.
//!
//! The on-disk format is one `key = value` pair per line, `#` comments,
//! unknown keys rejected. `print_kv` followed by `parse_kv` round-trips
//! exactly.

use fedmpq::learning::{FederationConfig, ModelArch, TrainConfig};
use fedmpq::sim::{RoundConfig, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub strategy: String,
    pub num_codebooks: usize,
    pub codebook_size: usize,
    pub subvector_len: usize,
    pub residual_ratio: f64,
    pub ema_factor: f64,
    pub sq_bits: u8,
    pub topk_ratio: f64,
    pub clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,
    pub target_accuracy: Option<f64>,
    pub use_public_data: bool,
    pub weighted_clustering: bool,
    pub pseudo_subsample: Option<usize>,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
    pub model: String,
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub samples_per_client: usize,
    pub alpha: f64,
    pub public_size: usize,
    pub public_mismatch: f64,
    pub test_size: usize,
    pub class_separation: f64,
    pub feature_noise: f64,
    pub client_lr: f64,
    pub server_lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub out_dir: String,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            strategy: "fedmpq".into(),
            num_codebooks: 4,
            codebook_size: 32,
            subvector_len: 2,
            residual_ratio: 0.001,
            ema_factor: 0.99,
            sq_bits: 8,
            topk_ratio: 0.01,
            clients: 100,
            clients_per_round: 10,
            rounds: 40,
            target_accuracy: None,
            use_public_data: true,
            weighted_clustering: true,
            pseudo_subsample: None,
            kmeans_iters: 25,
            kmeans_tol: 1e-6,
            model: "mlp".into(),
            dim: 16,
            hidden: 24,
            classes: 5,
            samples_per_client: 40,
            alpha: 0.3,
            public_size: 20,
            public_mismatch: 0.7,
            test_size: 1000,
            class_separation: 3.0,
            feature_noise: 1.0,
            client_lr: 0.6,
            server_lr: 1.0,
            local_epochs: 1,
            batch_size: 10,
            seeds: vec![1],
            out_dir: "runs".into(),
        }
    }
}

#[derive(Debug)]
pub struct SpecError(pub String);

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

type SpecResult<T> = Result<T, SpecError>;

fn err<T>(msg: impl Into<String>) -> SpecResult<T> {
    Err(SpecError(msg.into()))
}

impl ExperimentSpec {
    pub fn strategy(&self) -> SpecResult<Strategy> {
        match self.strategy.as_str() {
            "fedmpq" => Ok(Strategy::FedMpq),
            "spq" => Ok(Strategy::Spq),
            "scalar_quant" | "sq" => Ok(Strategy::ScalarQuant { bits: self.sq_bits }),
            "topk" | "topk_prune" => Ok(Strategy::TopK {
                ratio: self.topk_ratio,
            }),
            "uncompressed" => Ok(Strategy::Uncompressed),
            other => err(format!(
                "unknown strategy '{other}' (expected fedmpq, spq, scalar_quant, topk, uncompressed)"
            )),
        }
    }

    pub fn arch(&self) -> SpecResult<ModelArch> {
        match self.model.as_str() {
            "logistic" => Ok(ModelArch::Logistic {
                dim: self.dim,
                classes: self.classes,
            }),
            "mlp" => Ok(ModelArch::Mlp {
                dim: self.dim,
                hidden: self.hidden,
                classes: self.classes,
            }),
            other => err(format!(
                "unknown model '{other}' (expected logistic or mlp)"
            )),
        }
    }

    pub fn round_config(&self) -> SpecResult<RoundConfig> {
        Ok(RoundConfig {
            clients_per_round: self.clients_per_round,
            num_codebooks: self.num_codebooks,
            codebook_size: self.codebook_size,
            subvector_len: self.subvector_len,
            residual_ratio: self.residual_ratio,
            ema_factor: self.ema_factor,
            strategy: self.strategy()?,
            rounds: self.rounds,
            target_accuracy: self.target_accuracy,
            use_public_data: self.use_public_data,
            weighted_clustering: self.weighted_clustering,
            pseudo_subsample: self.pseudo_subsample,
            kmeans_iters: self.kmeans_iters,
            kmeans_tol: self.kmeans_tol,
        })
    }

    pub fn federation_config(&self, seed: u64) -> FederationConfig {
        FederationConfig {
            n_clients: self.clients,
            classes: self.classes,
            dim: self.dim,
            samples_per_client: self.samples_per_client,
            alpha: self.alpha,
            public_size: self.public_size,
            public_mismatch: self.public_mismatch,
            test_size: self.test_size,
            class_separation: self.class_separation,
            feature_noise: self.feature_noise,
            seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            client_lr: self.client_lr,
            server_lr: self.server_lr,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
        }
    }

    /// Full validation before any compute starts.
    pub fn validate(&self) -> SpecResult<()> {
        self.arch()?;
        let round = self.round_config()?;
        round.validate().map_err(|e| SpecError(e.to_string()))?;
        if self.seeds.is_empty() {
            return err("at least one seed required");
        }
        if self.clients == 0 || self.samples_per_client == 0 || self.test_size == 0 {
            return err("clients, samples_per_client, and test_size must be >= 1");
        }
        if self.clients_per_round > self.clients {
            return err(format!(
                "clients_per_round {} exceeds clients {}",
                self.clients_per_round, self.clients
            ));
        }
        if self.alpha <= 0.0 {
            return err("alpha must be > 0");
        }
        if !(0.0..=1.0).contains(&self.public_mismatch) {
            return err("public_mismatch must be in [0, 1]");
        }
        if self.client_lr < 0.0 || self.server_lr < 0.0 {
            return err("learning rates must be >= 0");
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return err("local_epochs and batch_size must be >= 1");
        }
        if self.model == "mlp" && self.hidden == 0 {
            return err("hidden must be >= 1 for the mlp model");
        }
        Ok(())
    }

    /// Deterministic slug naming one run configuration.
    pub fn slug(&self) -> String {
        match self.strategy.as_str() {
            "fedmpq" | "spq" => format!(
                "{}_m{}_k{}_d{}_r{}",
                self.strategy,
                self.num_codebooks,
                self.codebook_size,
                self.subvector_len,
                self.residual_ratio
            ),
            "scalar_quant" | "sq" => format!("sq_b{}", self.sq_bits),
            "topk" | "topk_prune" => format!("topk_r{}", self.topk_ratio),
            other => other.to_string(),
        }
    }

    /// Render as the flat key-value config format.
    pub fn print_kv(&self) -> String {
        let opt_f = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let opt_u = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
        let seeds = self
            .seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "strategy = {}\n\
             m = {}\n\
             k = {}\n\
             d = {}\n\
             residual = {}\n\
             gamma = {}\n\
             sq_bits = {}\n\
             topk_ratio = {}\n\
             clients = {}\n\
             clients_per_round = {}\n\
             rounds = {}\n\
             target_accuracy = {}\n\
             use_public_data = {}\n\
             weighted_clustering = {}\n\
             pseudo_subsample = {}\n\
             kmeans_iters = {}\n\
             kmeans_tol = {}\n\
             model = {}\n\
             dim = {}\n\
             hidden = {}\n\
             classes = {}\n\
             samples_per_client = {}\n\
             alpha = {}\n\
             public_size = {}\n\
             public_mismatch = {}\n\
             test_size = {}\n\
             class_separation = {}\n\
             feature_noise = {}\n\
             client_lr = {}\n\
             server_lr = {}\n\
             local_epochs = {}\n\
             batch_size = {}\n\
             seeds = {}\n\
             out_dir = {}\n",
            self.strategy,
            self.num_codebooks,
            self.codebook_size,
            self.subvector_len,
            self.residual_ratio,
            self.ema_factor,
            self.sq_bits,
            self.topk_ratio,
            self.clients,
            self.clients_per_round,
            self.rounds,
            opt_f(self.target_accuracy),
            self.use_public_data,
            self.weighted_clustering,
            opt_u(self.pseudo_subsample),
            self.kmeans_iters,
            self.kmeans_tol,
            self.model,
            self.dim,
            self.hidden,
            self.classes,
            self.samples_per_client,
            self.alpha,
            self.public_size,
            self.public_mismatch,
            self.test_size,
            self.class_separation,
            self.feature_noise,
            self.client_lr,
            self.server_lr,
            self.local_epochs,
            self.batch_size,
            seeds,
            self.out_dir,
        )
    }

    /// Apply one key-value assignment. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> SpecResult<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> SpecResult<T> {
            value
                .parse::<T>()
                .map_err(|_| SpecError(format!("invalid value '{value}' for key '{key}'")))
        }
        let opt_f = |value: &str| -> SpecResult<Option<f64>> {
            if value == "none" {
                Ok(None)
            } else {
                Ok(Some(parse::<f64>("", value).map_err(|_| {
                    SpecError(format!("invalid value '{value}' (number or 'none')"))
                })?))
            }
        };
        match key {
            "strategy" => self.strategy = value.to_string(),
            "m" => self.num_codebooks = parse(key, value)?,
            "k" => self.codebook_size = parse(key, value)?,
            "d" => self.subvector_len = parse(key, value)?,
            "residual" => self.residual_ratio = parse(key, value)?,
            "gamma" => self.ema_factor = parse(key, value)?,
            "sq_bits" => self.sq_bits = parse(key, value)?,
            "topk_ratio" => self.topk_ratio = parse(key, value)?,
            "clients" => self.clients = parse(key, value)?,
            "clients_per_round" => self.clients_per_round = parse(key, value)?,
            "rounds" => self.rounds = parse(key, value)?,
            "target_accuracy" => self.target_accuracy = opt_f(value)?,
            "use_public_data" => self.use_public_data = parse(key, value)?,
            "weighted_clustering" => self.weighted_clustering = parse(key, value)?,
            "pseudo_subsample" => {
                self.pseudo_subsample = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "kmeans_iters" => self.kmeans_iters = parse(key, value)?,
            "kmeans_tol" => self.kmeans_tol = parse(key, value)?,
            "model" => self.model = value.to_string(),
            "dim" => self.dim = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "samples_per_client" => self.samples_per_client = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "public_size" => self.public_size = parse(key, value)?,
            "public_mismatch" => self.public_mismatch = parse(key, value)?,
            "test_size" => self.test_size = parse(key, value)?,
            "class_separation" => self.class_separation = parse(key, value)?,
            "feature_noise" => self.feature_noise = parse(key, value)?,
            "client_lr" => self.client_lr = parse(key, value)?,
            "server_lr" => self.server_lr = parse(key, value)?,
            "local_epochs" => self.local_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seeds" => {
                let seeds: Result<Vec<u64>, _> =
                    value.split(',').map(|s| s.trim().parse::<u64>()).collect();
                self.seeds =
                    seeds.map_err(|_| SpecError(format!("invalid seeds list '{value}'")))?;
            }
            "out_dir" => self.out_dir = value.to_string(),
            other => return err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Parse the flat key-value format, starting from defaults.
    pub fn parse_kv(text: &str) -> SpecResult<Self> {
        let mut spec = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected 'key = value'", lineno + 1));
            };
            spec.set(key.trim(), value.trim())?;
        }
        Ok(spec)
    }
}
