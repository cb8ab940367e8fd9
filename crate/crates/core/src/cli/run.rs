use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::config::{ExperimentConfig, Pipeline};
use crate::cli::verify::{run_suites, Hooks};
use crate::error::{Error, Result};
use crate::experiments::{group_seed, run_fewshot, run_ood, run_transfer, write_csv, RunRecord, Split};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub pipeline: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub group_seeds: Vec<u64>,
    pub records: usize,
    pub config: ExperimentConfig,
}

/// Records of the configured pipeline.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    match cfg.pipeline {
        Pipeline::Transfer => run_transfer(&cfg.transfer, cfg.master_seed, cfg.n_groups),
        Pipeline::Fewshot => run_fewshot(&cfg.fewshot, cfg.master_seed, cfg.n_groups),
        Pipeline::Ood => run_ood(&cfg.ood, cfg.master_seed, cfg.n_groups),
        Pipeline::Verify => verify_records(cfg.master_seed, &Hooks::default()),
    }
}

/// One pass/fail row plus the worst observed value per suite.
pub fn verify_records(seed: u64, hooks: &Hooks) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for r in run_suites(seed, hooks)? {
        out.push(
            RunRecord::new("verify", seed, r.name, "probing", Split::IdTrain, "passed", f64::from(u8::from(r.passed)))
                .with("instances", r.instances),
        );
        out.push(RunRecord::new("verify", seed, r.name, "probing", Split::IdTrain, "worst", r.worst));
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the pipeline and writes `results.csv` and `manifest.json`. Returns
/// the output directory.
pub fn run_config(mut cfg: ExperimentConfig, ov: &Overrides) -> Result<PathBuf> {
    if let Some(s) = ov.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &ov.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    let records = match ov.jobs {
        Some(0) => return Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| execute(&cfg))?,
        None => execute(&cfg)?,
    };
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut csv = Vec::new();
    write_csv(&records, &mut csv)?;
    write_file(&dir.join("results.csv"), &csv)?;
    let groups = if cfg.pipeline == Pipeline::Verify { 0 } else { cfg.n_groups };
    let manifest = Manifest {
        version: VERSION.into(),
        pipeline: cfg.pipeline.as_str().into(),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        group_seeds: (0..groups).map(|g| group_seed(cfg.master_seed, g)).collect(),
        records: records.len(),
        config: cfg,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_file(&dir.join("manifest.json"), &json)?;
    Ok(dir)
}

/// Exit code for a failed command: 2 for configuration problems, 3 for
/// anything that went wrong while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}
