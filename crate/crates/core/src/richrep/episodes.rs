use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train, train_with_callback, HeadKind, LossKind, Network, TrainConfig};
use crate::richrep::bank::{Provenance, RepresentationBank};
use crate::rng::Rng;
use crate::tasks::Dataset;

/// Hidden widths of an MLP; the last entry is the representation width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Arch {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub cosine_head: bool,
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            cosine_head: false,
        }
    }
}

impl Arch {
    pub fn head_kind(&self) -> HeadKind {
        if self.cosine_head {
            HeadKind::Cosine
        } else {
            HeadKind::Linear
        }
    }

    pub fn sizes(&self, n_in: usize, n_classes: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(n_in);
        s.extend_from_slice(&self.hidden);
        s.push(n_classes);
        s
    }

    pub fn feature_dim(&self, n_in: usize) -> usize {
        self.hidden.last().copied().unwrap_or(n_in)
    }

    /// Fresh network initialized from the init stream of `seed`.
    pub fn build(&self, n_in: usize, n_classes: usize, seed: u64) -> Result<Network> {
        Network::mlp(&self.sizes(n_in, n_classes), self.head_kind(), &mut Rng::for_init(seed))
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Parameter("at least one seed is required".into()));
    }
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(Error::Parameter(format!("seed {s} listed twice")));
        }
    }
    Ok(())
}

/// One training episode: `arch` on `data` with cross-entropy, every random
/// choice drawn from `seed`.
pub fn train_episode(data: &Dataset, arch: &Arch, base: &TrainConfig, seed: u64) -> Result<Network> {
    let run = || {
        let mut net = arch.build(data.n_features(), data.n_classes, seed)?;
        train(&mut net, &data.x, &data.y, LossKind::CrossEntropy, &base.with_seed(seed))?;
        Ok(net)
    };
    run().map_err(|e| Error::Episode {
        seed,
        source: Box::new(e),
    })
}

/// Independent episodes differing only by seed. Episodes run in parallel;
/// the bank keeps seed order.
pub fn train_episodes(
    data: &Dataset,
    arch: &Arch,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<RepresentationBank> {
    check_seeds(seeds)?;
    let members = seeds
        .par_iter()
        .map(|&s| train_episode(data, arch, base, s))
        .collect::<Result<Vec<_>>>()?;
    RepresentationBank::new(members, seeds.to_vec(), Provenance::IndependentEpisodes)
}

/// `count` evenly spaced epochs ending at `epochs`.
pub fn default_snapshot_epochs(epochs: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count).map(|i| i * epochs / count).filter(|&e| e > 0).collect();
    out.dedup();
    out
}

/// One run of `config.epochs` epochs, copying the network after each listed
/// epoch (1-based count of completed epochs).
pub fn snapshot_episode(
    data: &Dataset,
    arch: &Arch,
    config: &TrainConfig,
    snapshot_epochs: &[usize],
) -> Result<RepresentationBank> {
    if snapshot_epochs.is_empty() {
        return Err(Error::Parameter("no snapshot epochs given".into()));
    }
    if snapshot_epochs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("snapshot epochs must be strictly ascending".into()));
    }
    if snapshot_epochs[0] == 0 || *snapshot_epochs.last().unwrap() > config.epochs {
        return Err(Error::Parameter(format!(
            "snapshot epochs must lie in 1..={}",
            config.epochs
        )));
    }
    let seed = config.seed;
    let mut snaps = Vec::with_capacity(snapshot_epochs.len());
    let mut run = || {
        let mut net = arch.build(data.n_features(), data.n_classes, seed)?;
        train_with_callback(&mut net, &data.x, &data.y, LossKind::CrossEntropy, config, |e, n| {
            if snapshot_epochs.contains(&(e + 1)) {
                snaps.push(n.clone());
            }
            Ok(())
        })?;
        Ok(())
    };
    run().map_err(|e| Error::Episode {
        seed,
        source: Box::new(e),
    })?;
    let seeds = vec![seed; snaps.len()];
    RepresentationBank::new(snaps, seeds, Provenance::Snapshots)
}
