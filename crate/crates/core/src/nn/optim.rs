use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{LayerGrad, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Multiply by `factor` every `every` epochs.
    Step { factor: f64, every: usize },
    /// Half-cosine decay from the base rate towards zero.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 30,
            batch_size: 64,
            schedule: Schedule::Constant,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = self.lr.is_finite() && self.momentum.is_finite() && self.weight_decay.is_finite();
        if !finite {
            return Err(Error::Parameter("training hyper-parameters must be finite".into()));
        }
        // lr = 0 is accepted so that frozen-parameter runs can reuse the driver.
        if self.lr < 0.0 {
            return Err(Error::Parameter(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Parameter("weight decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if let Schedule::Step { factor, every } = self.schedule {
            if every == 0 || !factor.is_finite() {
                return Err(Error::Parameter("step schedule needs every > 0 and a finite factor".into()));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Learning rate for `epoch` (0-based) of a run lasting `total_epochs`.
pub fn lr_at(schedule: Schedule, base_lr: f64, epoch: usize, total_epochs: usize) -> f64 {
    match schedule {
        Schedule::Constant => base_lr,
        Schedule::Step { factor, every } => base_lr * factor.powi((epoch / every) as i32),
        Schedule::Cosine => {
            let t = epoch as f64 / total_epochs.max(1) as f64;
            base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

/// Momentum buffers, one per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    buffers: Vec<LayerGrad>,
}

impl MomentumState {
    pub fn zeros_for(model: &impl Parameterized) -> Self {
        Self {
            buffers: model
                .param_shapes()
                .into_iter()
                .map(|(o, i)| LayerGrad::zeros(o, i))
                .collect(),
        }
    }

    pub fn buffers(&self) -> &[LayerGrad] {
        &self.buffers
    }
}

/// One SGD update:
///
/// ```text
/// v ← momentum·v + (g + wd·w)
/// w ← w − lr·v
/// ```
///
/// Weight decay touches weight matrices only; biases and cosine gains get
/// `v ← momentum·v + g`.
pub fn sgd_step(
    model: &mut impl Parameterized,
    grads: &[LayerGrad],
    state: &mut MomentumState,
    config: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if grads.len() != state.buffers.len() {
        return Err(Error::Shape(format!(
            "{} gradients for {} parameter blocks",
            grads.len(),
            state.buffers.len()
        )));
    }
    if let Some(layer) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { layer });
    }
    let mut blocks = model.param_blocks();
    if blocks.len() != grads.len() {
        return Err(Error::Shape("gradient count does not match model".into()));
    }
    for (l, ((block, g), v)) in blocks
        .iter_mut()
        .zip(grads)
        .zip(state.buffers.iter_mut())
        .enumerate()
    {
        if block.weights.len() != g.weights.as_slice().len() || block.bias.len() != g.bias.len() {
            return Err(Error::Shape(format!("gradient shape mismatch in block {l}")));
        }
        let mu = config.momentum;
        let wd = config.weight_decay;
        for ((w, gw), vw) in block
            .weights
            .iter_mut()
            .zip(g.weights.as_slice())
            .zip(v.weights.as_mut_slice())
        {
            *vw = mu * *vw + (gw + wd * *w);
            *w -= lr * *vw;
        }
        for ((b, gb), vb) in block.bias.iter_mut().zip(&g.bias).zip(v.bias.iter_mut()) {
            *vb = mu * *vb + gb;
            *b -= lr * *vb;
        }
    }
    Ok(())
}
