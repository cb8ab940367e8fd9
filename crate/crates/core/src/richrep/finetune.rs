use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    train, Activation, DenseLayer, HeadKind, LossKind, Network, TrainConfig,
};
use crate::richrep::bank::{cat_features, RepresentationBank};
use crate::rng::Rng;
use crate::tasks::Dataset;

/// Result of two-stage fine-tuning: the fine-tuned legs (each with its own
/// target head) and the final classifier over their frozen concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStage {
    pub legs: RepresentationBank,
    pub head: DenseLayer,
}

impl TwoStage {
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.head.forward(&cat_features(&self.legs, x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }
}

/// Seed used for leg `i` of a fine-tuning run seeded by `seed`.
pub fn leg_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// Fine-tunes one network on `target` under a fresh linear head.
pub fn finetune(net: &Network, target: &Dataset, config: &TrainConfig) -> Result<Network> {
    let head = DenseLayer::glorot(
        net.feature_dim(),
        target.n_classes,
        Activation::Linear,
        &mut Rng::for_init(config.seed),
    );
    let mut out = net.with_head(head, HeadKind::Linear)?;
    train(&mut out, &target.x, &target.y, LossKind::CrossEntropy, config)?;
    Ok(out)
}

/// `[w_1 … w_n] / n` with bias `Σ b_i / n`, so that the head's logits on
/// the concatenated features equal the mean of the leg logits.
pub fn concat_head_init(legs: &RepresentationBank) -> Result<DenseLayer> {
    if legs.members().iter().any(|m| m.head_kind() != HeadKind::Linear) {
        return Err(Error::Parameter("concatenated head init needs linear leg heads".into()));
    }
    let n = legs.len() as f64;
    let k = legs.member(0).n_classes();
    if legs.members().iter().any(|m| m.n_classes() != k) {
        return Err(Error::Shape("legs disagree on the number of classes".into()));
    }
    let blocks: Vec<&Matrix> = legs.members().iter().map(|m| &m.head().weights).collect();
    let weights = Matrix::hcat(&blocks)?.scale(1.0 / n);
    let mut bias = vec![0.0; k];
    for m in legs.members() {
        for (b, v) in bias.iter_mut().zip(&m.head().bias) {
            *b += v;
        }
    }
    for b in &mut bias {
        *b /= n;
    }
    DenseLayer::new(weights, bias, Activation::Linear)
}

/// Stage 1 fine-tunes each leg separately (in parallel, leg `i` seeded by
/// [`leg_seed`]); stage 2 freezes them and trains the concatenated head
/// starting from [`concat_head_init`].
pub fn two_stage_finetune(
    bank: &RepresentationBank,
    target: &Dataset,
    ft_config: &TrainConfig,
    stage2: &TrainConfig,
) -> Result<TwoStage> {
    let legs = (0..bank.len())
        .into_par_iter()
        .map(|i| {
            let cfg = ft_config.with_seed(leg_seed(ft_config.seed, i));
            finetune(bank.member(i), target, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds = (0..bank.len()).map(|i| leg_seed(ft_config.seed, i)).collect();
    let legs = RepresentationBank::new(legs, seeds, bank.provenance())?;
    let head = train_frozen_head(&legs, concat_head_init(&legs)?, target, stage2)?;
    Ok(TwoStage { legs, head })
}

/// Trains `head` on the frozen concatenated features of `legs`.
pub fn train_frozen_head(
    legs: &RepresentationBank,
    head: DenseLayer,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<DenseLayer> {
    let feats = cat_features(legs, &data.x)?;
    let mut net = Network::new(vec![head], HeadKind::Linear)?;
    train(&mut net, &feats, &data.y, LossKind::CrossEntropy, config)?;
    Ok(net.into_layers().pop().unwrap())
}
