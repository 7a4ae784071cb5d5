//! `fedmpq` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

mod inspect;
mod runner;
mod spec;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use runner::{expand_grid, resolve_out_dir, run_spec, RunError};
use spec::ExperimentSpec;

#[derive(Parser)]
#[command(
    name = "fedmpq",
    about = "Federated learning simulator with multi-codebook product quantization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (possibly over several seeds).
    Run(RunArgs),
    /// Run a grid of experiments over M, K, D, and residual ratio.
    Sweep(SweepArgs),
    /// Run the built-in oracle and property self-checks.
    Verify,
    /// Decode a serialized client update packet.
    InspectPacket(InspectArgs),
}

/// Flags shared by `run` and `sweep`; every flag overrides the config
/// file value.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat key-value config file (defaults apply for missing keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Compression strategy: fedmpq, spq, scalar_quant, topk, uncompressed.
    #[arg(long)]
    strategy: Option<String>,
    /// Residual upload ratio rho in [0, 1].
    #[arg(long)]
    residual: Option<f64>,
    /// Pseudo-centroid EMA factor gamma in (0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Bits for the scalar quantization baseline.
    #[arg(long)]
    bits: Option<u8>,
    /// Keep ratio for the top-k baseline.
    #[arg(long)]
    topk_ratio: Option<f64>,
    /// Total clients in the federation.
    #[arg(long)]
    clients: Option<usize>,
    /// Clients sampled per round.
    #[arg(long)]
    clients_per_round: Option<usize>,
    /// Round budget.
    #[arg(long)]
    rounds: Option<usize>,
    /// Stop early once this test accuracy is reached.
    #[arg(long)]
    target: Option<f64>,
    /// Drop the public-data codebook ("w/o public data" mode).
    #[arg(long)]
    no_public_data: bool,
    /// Model: logistic or mlp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    samples_per_client: Option<usize>,
    /// Dirichlet concentration for client label skew.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    public_size: Option<usize>,
    /// Public-set label mismatch in [0, 1].
    #[arg(long)]
    public_mismatch: Option<f64>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    client_lr: Option<f64>,
    #[arg(long)]
    server_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    /// Comma-separated master seeds, e.g. 1,2,3.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory (FEDMPQ_OUTPUT_DIR overrides).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Codebooks per layer (M).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Codewords per codebook (K, power of two).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Codeword length (D).
    #[arg(long = "D")]
    d: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated list of M values.
    #[arg(long = "M")]
    m: Option<String>,
    /// Comma-separated list of K values.
    #[arg(long = "K")]
    k: Option<String>,
    /// Comma-separated list of D values.
    #[arg(long = "D")]
    d: Option<String>,
    /// Comma-separated list of residual ratios.
    #[arg(long)]
    residuals: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// Packet file to decode.
    file: PathBuf,
    /// Codewords per codebook (K) the packet was built against.
    #[arg(long = "K")]
    k: usize,
    /// Codeword length (D) the packet was built against.
    #[arg(long = "D")]
    d: usize,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load_spec(common: &CommonArgs) -> Result<ExperimentSpec, (u8, String)> {
    let mut spec = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
            ExperimentSpec::parse_kv(&text).map_err(|e| (EXIT_CONFIG, e.to_string()))?
        }
        None => ExperimentSpec::default(),
    };
    let mut set = |key: &str, value: String| -> Result<(), (u8, String)> {
        spec.set(key, &value)
            .map_err(|e| (EXIT_CONFIG, e.to_string()))
    };
    if let Some(v) = &common.strategy {
        set("strategy", v.clone())?;
    }
    if let Some(v) = common.residual {
        set("residual", v.to_string())?;
    }
    if let Some(v) = common.gamma {
        set("gamma", v.to_string())?;
    }
    if let Some(v) = common.bits {
        set("sq_bits", v.to_string())?;
    }
    if let Some(v) = common.topk_ratio {
        set("topk_ratio", v.to_string())?;
    }
    if let Some(v) = common.clients {
        set("clients", v.to_string())?;
    }
    if let Some(v) = common.clients_per_round {
        set("clients_per_round", v.to_string())?;
    }
    if let Some(v) = common.rounds {
        set("rounds", v.to_string())?;
    }
    if let Some(v) = common.target {
        set("target_accuracy", v.to_string())?;
    }
    if common.no_public_data {
        set("use_public_data", "false".into())?;
    }
    if let Some(v) = &common.model {
        set("model", v.clone())?;
    }
    if let Some(v) = common.dim {
        set("dim", v.to_string())?;
    }
    if let Some(v) = common.hidden {
        set("hidden", v.to_string())?;
    }
    if let Some(v) = common.classes {
        set("classes", v.to_string())?;
    }
    if let Some(v) = common.samples_per_client {
        set("samples_per_client", v.to_string())?;
    }
    if let Some(v) = common.alpha {
        set("alpha", v.to_string())?;
    }
    if let Some(v) = common.public_size {
        set("public_size", v.to_string())?;
    }
    if let Some(v) = common.public_mismatch {
        set("public_mismatch", v.to_string())?;
    }
    if let Some(v) = common.test_size {
        set("test_size", v.to_string())?;
    }
    if let Some(v) = common.client_lr {
        set("client_lr", v.to_string())?;
    }
    if let Some(v) = common.server_lr {
        set("server_lr", v.to_string())?;
    }
    if let Some(v) = common.batch_size {
        set("batch_size", v.to_string())?;
    }
    if let Some(v) = common.local_epochs {
        set("local_epochs", v.to_string())?;
    }
    if let Some(v) = &common.seeds {
        set("seeds", v.clone())?;
    }
    if let Some(v) = &common.out {
        set("out_dir", v.display().to_string())?;
    }
    Ok(spec)
}

fn parse_list<T: std::str::FromStr>(
    name: &str,
    raw: &Option<String>,
    default: T,
) -> Result<Vec<T>, (u8, String)> {
    match raw {
        None => Ok(vec![default]),
        Some(text) => text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|_| (EXIT_CONFIG, format!("invalid {name} list entry '{s}'")))
            })
            .collect(),
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut spec = match load_spec(&args.common) {
        Ok(s) => s,
        Err((code, msg)) => return fail(code, msg),
    };
    for (key, value) in [("m", args.m), ("k", args.k), ("d", args.d)] {
        if let Some(v) = value {
            if let Err(e) = spec.set(key, &v.to_string()) {
                return fail(EXIT_CONFIG, e);
            }
        }
    }
    if let Err(e) = spec.validate() {
        return fail(EXIT_CONFIG, e);
    }
    let out = resolve_out_dir(&spec);
    match run_spec(&spec, &out) {
        Ok(_) => ExitCode::SUCCESS,
        Err(RunError::Config(e)) => fail(EXIT_CONFIG, e),
        Err(RunError::Runtime(e)) => fail(EXIT_RUNTIME, e),
    }
}

fn cmd_sweep(args: SweepArgs) -> ExitCode {
    let base = match load_spec(&args.common) {
        Ok(s) => s,
        Err((code, msg)) => return fail(code, msg),
    };
    let ms = match parse_list("M", &args.m, base.num_codebooks) {
        Ok(v) => v,
        Err((code, msg)) => return fail(code, msg),
    };
    let ks = match parse_list("K", &args.k, base.codebook_size) {
        Ok(v) => v,
        Err((code, msg)) => return fail(code, msg),
    };
    let ds = match parse_list("D", &args.d, base.subvector_len) {
        Ok(v) => v,
        Err((code, msg)) => return fail(code, msg),
    };
    let residuals = match parse_list("residual", &args.residuals, base.residual_ratio) {
        Ok(v) => v,
        Err((code, msg)) => return fail(code, msg),
    };

    let grid = expand_grid(&base, &ms, &ks, &ds, &residuals);
    println!("sweep: {} configurations", grid.len());
    // Validate the whole grid before any compute.
    for spec in &grid {
        if let Err(e) = spec.validate() {
            return fail(EXIT_CONFIG, format!("{}: {e}", spec.slug()));
        }
    }
    let out = resolve_out_dir(&base);
    for spec in &grid {
        match run_spec(spec, &out) {
            Ok(_) => {}
            Err(RunError::Config(e)) => return fail(EXIT_CONFIG, e),
            Err(RunError::Runtime(e)) => return fail(EXIT_RUNTIME, e),
        }
    }
    ExitCode::SUCCESS
}

fn cmd_inspect(args: InspectArgs) -> ExitCode {
    let bytes = match std::fs::read(&args.file) {
        Ok(b) => b,
        Err(e) => {
            return fail(
                EXIT_RUNTIME,
                format!("cannot read {}: {e}", args.file.display()),
            )
        }
    };
    match inspect::inspect_packet(&bytes, args.k, args.d) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_RUNTIME, e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify => {
            let failures = verify::run_verify();
            if failures == 0 {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                fail(EXIT_RUNTIME, format!("{failures} check(s) failed"))
            }
        }
        Command::InspectPacket(args) => cmd_inspect(args),
    }
}
