//! Synthetic distribution-shift task.
//!
//! Each row has three feature blocks:
//!
//! - core: `core_scale · e_y + N(0, σ²)`, stable across environments;
//! - spurious: `spur_scale · e_s + N(0, σ²)` where `s = y` with the
//!   environment's probability ρ and otherwise a uniformly drawn other class;
//! - noise: pure `N(0, σ²)`.
//!
//! Training environments carry high ρ, so the spurious block is a shortcut
//! that stops working at ρ_ood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::tasks::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftSpec {
    pub n_classes: usize,
    pub d_core: usize,
    pub d_spur: usize,
    pub d_noise: usize,
    pub core_scale: f64,
    pub spur_scale: f64,
    pub noise_std: f64,
    /// One ρ per training environment.
    pub env_correlations: Vec<f64>,
    pub ood_correlation: f64,
    pub n_per_env: usize,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            n_classes: 5,
            d_core: 5,
            d_spur: 5,
            d_noise: 10,
            core_scale: 1.0,
            spur_scale: 2.0,
            noise_std: 1.0,
            env_correlations: vec![0.95, 0.9],
            ood_correlation: 0.2,
            n_per_env: 500,
        }
    }
}

/// Output of [`gen_shift`]. Environment ids: training environment `e` is
/// `e`, the OOD test set uses `env_correlations.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftData {
    pub train_envs: Vec<Dataset>,
    /// `n_per_env` rows per training environment, each with its own ρ.
    pub id_test: Dataset,
    /// `n_per_env · n_envs` rows at ρ_ood.
    pub ood_test: Dataset,
}

impl ShiftData {
    pub fn pooled_train(&self) -> Dataset {
        let parts: Vec<&Dataset> = self.train_envs.iter().collect();
        Dataset::concat(&parts).expect("environments share a width")
    }
}

impl ShiftSpec {
    pub fn n_features(&self) -> usize {
        self.d_core + self.d_spur + self.d_noise
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Parameter("need at least two classes".into()));
        }
        // Prototypes are one-hot, so each block needs an axis per class.
        if self.d_core < self.n_classes || self.d_spur < self.n_classes {
            return Err(Error::Parameter(format!(
                "d_core ({}) and d_spur ({}) must be at least n_classes ({})",
                self.d_core, self.d_spur, self.n_classes
            )));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.core_scale) || !pos(self.spur_scale) {
            return Err(Error::Parameter("prototype scales must be positive".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Parameter("noise_std must be nonnegative".into()));
        }
        if self.env_correlations.is_empty() {
            return Err(Error::Parameter("need at least one training environment".into()));
        }
        let in_unit = |r: &f64| (0.0..=1.0).contains(r);
        if !self.env_correlations.iter().all(in_unit) || !in_unit(&self.ood_correlation) {
            return Err(Error::Parameter("correlations must lie in [0, 1]".into()));
        }
        if self.n_per_env == 0 {
            return Err(Error::Parameter("n_per_env must be positive".into()));
        }
        Ok(())
    }

    /// Column range of the core block.
    pub fn core_cols(&self) -> std::ops::Range<usize> {
        0..self.d_core
    }

    pub fn spur_cols(&self) -> std::ops::Range<usize> {
        self.d_core..self.d_core + self.d_spur
    }

    pub fn noise_cols(&self) -> std::ops::Range<usize> {
        self.d_core + self.d_spur..self.n_features()
    }
}

/// Draws `n` rows at correlation `rho`. Returns the dataset and the
/// spurious prototype index of every row.
pub fn sample_rows(spec: &ShiftSpec, n: usize, rho: f64, env: u32, rng: &mut Rng) -> (Dataset, Vec<usize>) {
    let k = spec.n_classes;
    let d = spec.n_features();
    let mut x = Matrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    let mut spur = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.below(k);
        let s = if rng.bernoulli(rho) {
            label
        } else {
            let o = rng.below(k - 1);
            if o >= label {
                o + 1
            } else {
                o
            }
        };
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = spec.noise_std * rng.normal();
        }
        row[label] += spec.core_scale;
        row[spec.d_core + s] += spec.spur_scale;
        y.push(label);
        spur.push(s);
    }
    let env = vec![env; n];
    (Dataset { x, y, env, n_classes: k }, spur)
}

pub fn gen_shift(spec: &ShiftSpec, seed: u64) -> Result<ShiftData> {
    spec.validate()?;
    let mut rng = Rng::for_data(seed);
    let n_envs = spec.env_correlations.len();
    let train_envs = spec
        .env_correlations
        .iter()
        .enumerate()
        .map(|(e, &rho)| sample_rows(spec, spec.n_per_env, rho, e as u32, &mut rng).0)
        .collect();
    let id_parts: Vec<Dataset> = spec
        .env_correlations
        .iter()
        .enumerate()
        .map(|(e, &rho)| sample_rows(spec, spec.n_per_env, rho, e as u32, &mut rng).0)
        .collect();
    let id_refs: Vec<&Dataset> = id_parts.iter().collect();
    let id_test = Dataset::concat(&id_refs)?;
    let (ood_test, _) = sample_rows(
        spec,
        spec.n_per_env * n_envs,
        spec.ood_correlation,
        n_envs as u32,
        &mut rng,
    );
    Ok(ShiftData {
        train_envs,
        id_test,
        ood_test,
    })
}
