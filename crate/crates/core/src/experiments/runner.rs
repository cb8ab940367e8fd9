use rayon::prelude::*;

use crate::error::Result;
use crate::experiments::fewshot::{run_fewshot_group, FewshotConfig};
use crate::experiments::ood::{run_ood_group, OodExperimentConfig};
use crate::experiments::records::{validate_records, RunRecord};
use crate::experiments::transfer::{run_transfer_group, TransferConfig};

/// Seed of group `g` under `master`.
pub fn group_seed(master: u64, g: usize) -> u64 {
    master.wrapping_add(g as u64)
}

/// Runs `f` for each of `n_groups` seed groups, in parallel on the current
/// rayon pool, and concatenates the records in group order.
pub fn run_groups<F>(master: u64, n_groups: usize, f: F) -> Result<Vec<RunRecord>>
where
    F: Fn(u64) -> Result<Vec<RunRecord>> + Sync,
{
    let parts: Vec<Result<Vec<RunRecord>>> = (0..n_groups)
        .into_par_iter()
        .map(|g| f(group_seed(master, g)))
        .collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    validate_records(&out)?;
    Ok(out)
}

pub fn run_transfer(cfg: &TransferConfig, master: u64, n_groups: usize) -> Result<Vec<RunRecord>> {
    run_groups(master, n_groups, |g| run_transfer_group(cfg, g))
}

pub fn run_fewshot(cfg: &FewshotConfig, master: u64, n_groups: usize) -> Result<Vec<RunRecord>> {
    run_groups(master, n_groups, |g| run_fewshot_group(cfg, g))
}

pub fn run_ood(cfg: &OodExperimentConfig, master: u64, n_groups: usize) -> Result<Vec<RunRecord>> {
    run_groups(master, n_groups, |g| run_ood_group(cfg, g))
}
