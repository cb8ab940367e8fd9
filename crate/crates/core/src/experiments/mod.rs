//! End-to-end pipelines at desk scale.

pub mod eval;
pub mod fewshot;
pub mod ood;
pub mod records;
pub mod runner;
pub mod seeds;
pub mod transfer;

pub use records::{fmt_g6, read_csv, write_csv, RunRecord, Split, CSV_HEADER};
pub use seeds::derive_seed;
pub use transfer::{run_transfer_group, TransferConfig};
pub use fewshot::{run_fewshot_group, FewshotClassifier, FewshotConfig, SnapshotConfig};
pub use ood::{run_ood_group, select_hyperparams, train_vrex, vrex_objective, OodAlgorithm, OodConfig, OodExperimentConfig, OodInit, TuneMode};
pub use runner::{group_seed, run_fewshot, run_groups, run_ood, run_transfer};
