//! Data supply: synthetic shift tasks, IDX ingestion, class splits,
//! few-shot episodes and environment roles.

pub mod attributes;
pub mod dataset;
pub mod env;
pub mod episode;
pub mod idx;
pub mod shift;
pub mod split;

pub use attributes::{gen_attribute_classes, AttributeSpec};
pub use dataset::Dataset;
pub use env::{env_partition, EnvRoles, OodTask};
pub use episode::{sample_episode, Episode, EpisodeSpec};
pub use idx::load_idx;
pub use shift::{gen_shift, ShiftData, ShiftSpec};
pub use split::split_classes;
