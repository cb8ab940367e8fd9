//! Rich representations built from several training episodes.

pub mod bank;
pub mod cat;
pub mod distill;
pub mod ensemble;
pub mod episodes;
pub mod finetune;

pub use bank::{block_offsets, cat_features, BankManifest, Provenance, RepresentationBank};
pub use cat::{joint_training, naive_finetune, CatNetwork};
pub use distill::{distill, distill_student, DistillMode, DistillSpec, Student};
pub use ensemble::{leg_probe_gap, mean_softmax, subset_ensemble_predict, LegGap};
pub use episodes::{default_snapshot_epochs, snapshot_episode, train_episode, train_episodes, Arch};
pub use finetune::{concat_head_init, finetune, two_stage_finetune, TwoStage};
