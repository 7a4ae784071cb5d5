//! Executes experiment specs and writes their outputs.
//!
//! Layout under the output directory, one subdirectory per spec slug:
//!
//! ```text
//! <out>/<slug>/config.txt        resolved spec snapshot
//! <out>/<slug>/seed_<s>/metrics.csv
//! <out>/<slug>/seed_<s>/summary.json
//! <out>/<slug>/aggregate.json    mean/std over seeds
//! ```
//!
//! Reruns of the same spec overwrite the same paths.

use std::fs;
use std::path::{Path, PathBuf};

use fedmpq::learning::gen_synthetic_federation;
use fedmpq::sim::report::{write_metrics_csv, write_summary_json};
use fedmpq::sim::{aggregate_seeds, run_experiment, ExperimentSummary, Simulation, StopRule};

use crate::spec::ExperimentSpec;

pub enum RunError {
    Config(String),
    Runtime(String),
}

impl From<fedmpq::Error> for RunError {
    fn from(e: fedmpq::Error) -> Self {
        match e {
            fedmpq::Error::InvalidConfig(_) => RunError::Config(e.to_string()),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

/// Create the spec's output directory and prove it is writable before
/// any compute starts.
fn preflight(dir: &Path, spec: &ExperimentSpec) -> Result<(), RunError> {
    fs::create_dir_all(dir)
        .map_err(|e| RunError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    fs::write(dir.join("config.txt"), spec.print_kv())
        .map_err(|e| RunError::Runtime(format!("cannot write to {}: {e}", dir.display())))?;
    Ok(())
}

/// Run one spec (all seeds) into `<out>/<slug>/`. Returns the per-seed
/// summaries.
pub fn run_spec(
    spec: &ExperimentSpec,
    out_root: &Path,
) -> Result<Vec<ExperimentSummary>, RunError> {
    spec.validate()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let dir = out_root.join(spec.slug());
    preflight(&dir, spec)?;

    let arch = spec.arch().map_err(|e| RunError::Config(e.to_string()))?;
    let round_cfg = spec
        .round_config()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let stop = if spec.target_accuracy.is_some() {
        StopRule::StopAtTarget
    } else {
        StopRule::FixedRounds
    };

    let mut summaries = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let fed = gen_synthetic_federation(&spec.federation_config(seed))?;
        let mut sim = Simulation::new(arch, fed, spec.train_config(), round_cfg.clone(), seed)?;
        let mut result = run_experiment(&mut sim, stop)?;
        result.summary.seed = seed;

        let seed_dir = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)
            .map_err(|e| RunError::Runtime(format!("cannot create {}: {e}", seed_dir.display())))?;
        write_metrics_csv(&seed_dir.join("metrics.csv"), &result.series)?;
        write_summary_json(&seed_dir.join("summary.json"), &result.summary)?;
        println!(
            "{} seed {seed}: rounds {} peak {:.4} rounds_to_target {} cost {:.0}",
            spec.slug(),
            result.summary.rounds_run,
            result.summary.peak_accuracy,
            result
                .summary
                .rounds_to_target
                .map_or("inf".to_string(), |r| r.to_string()),
            result.summary.weighted_total_cost,
        );
        summaries.push(result.summary);
    }

    let aggregate = aggregate_seeds(&summaries);
    let doc = serde_json::json!({
        "slug": spec.slug(),
        "aggregate": aggregate,
        "per_seed": summaries,
    });
    fs::write(
        dir.join("aggregate.json"),
        serde_json::to_string_pretty(&doc).expect("aggregate serializes"),
    )
    .map_err(|e| RunError::Runtime(e.to_string()))?;
    Ok(summaries)
}

/// Expand a sweep grid over M, K, D, and residual ratio into one spec
/// per combination.
pub fn expand_grid(
    base: &ExperimentSpec,
    ms: &[usize],
    ks: &[usize],
    ds: &[usize],
    residuals: &[f64],
) -> Vec<ExperimentSpec> {
    let mut out = Vec::new();
    for &m in ms {
        for &k in ks {
            for &d in ds {
                for &r in residuals {
                    let mut spec = base.clone();
                    spec.num_codebooks = m;
                    spec.codebook_size = k;
                    spec.subvector_len = d;
                    spec.residual_ratio = r;
                    out.push(spec);
                }
            }
        }
    }
    out
}

/// Resolve the output root: the env override wins over the spec value.
pub fn resolve_out_dir(spec: &ExperimentSpec) -> PathBuf {
    match std::env::var("FEDMPQ_OUTPUT_DIR") {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&spec.out_dir),
    }
}
