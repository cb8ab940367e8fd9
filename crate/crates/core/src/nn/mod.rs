//! Minimal deterministic neural-network engine.

pub mod cosine;
pub mod format;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod train;

pub use cosine::{cosine_head_forward, CosineHead};
pub use layer::{Activation, DenseLayer, LayerGrad, ParamBlock, Parameterized};
pub use loss::{
    ce_kl_distill_loss, cosine_distill_loss, cross_entropy_loss, kl_distill_loss, softmax_rows,
    softmax_temperature,
};
pub use network::{HeadKind, Network, Trace};
pub use optim::{lr_at, sgd_step, MomentumState, Schedule, TrainConfig};
pub use train::{accuracy, run_sgd, train, train_with_callback, LossKind};
