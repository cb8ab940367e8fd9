//! Training across environments with ERM or vREx, hyper-parameter
//! selection on a tune split, and evaluation on a held-out environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::eval::split_holdout;
use crate::experiments::records::{fmt_g6, RunRecord, Split};
use crate::experiments::seeds::derive_seed;
use crate::matrix::Matrix;
use crate::nn::{
    accuracy, cross_entropy_loss, run_sgd, Activation, DenseLayer, HeadKind, LayerGrad, Network,
    Schedule, TrainConfig,
};
use crate::richrep::{cat_features, distill, train_episodes, Arch, DistillMode, DistillSpec};
use crate::rng::Rng;
use crate::tasks::shift::sample_rows;
use crate::tasks::{env_partition, gen_shift, Dataset, EnvRoles, OodTask, ShiftSpec};

/// Mean risk plus `beta` times the population variance of the risks.
pub fn vrex_objective(risks: &[f64], beta: f64) -> f64 {
    let n = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / n;
    if beta == 0.0 {
        return mean;
    }
    let var = risks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    mean + beta * var
}

/// d objective / d risk_e.
fn vrex_weights(risks: &[f64], beta: f64) -> Vec<f64> {
    let n = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / n;
    risks.iter().map(|r| (1.0 + 2.0 * beta * (r - mean)) / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum OodAlgorithm {
    Erm,
    Vrex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum OodInit {
    /// Whole network trained from a fresh initialization.
    Scratch,
    /// Frozen CAT-n features, linear head only.
    Cat,
    /// Frozen DISTILL-n student features, linear head only.
    Distill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TuneMode {
    /// Held-out rows of the training environments, recorded as `id_train`
    /// since they come from the training pool.
    Iid,
    /// The dedicated tune environment.
    Ood,
}

impl TuneMode {
    pub fn split(self) -> Split {
        match self {
            TuneMode::Iid => Split::IdTrain,
            TuneMode::Ood => Split::OodTune,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OodConfig {
    pub algorithm: OodAlgorithm,
    /// Penalty weights searched by vREx; ERM ignores it.
    pub beta_grid: Vec<f64>,
    pub init: OodInit,
    pub tune_mode: TuneMode,
    pub lr_grid: Vec<f64>,
    pub wd_grid: Vec<f64>,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            algorithm: OodAlgorithm::Erm,
            beta_grid: vec![0.5, 1.0, 5.0, 10.0, 50.0, 100.0],
            init: OodInit::Scratch,
            tune_mode: TuneMode::Ood,
            lr_grid: vec![0.01, 0.05],
            wd_grid: vec![0.0, 1e-3],
        }
    }
}

/// One point of the search grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub beta: f64,
    pub lr: f64,
    pub wd: f64,
}

impl OodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithm == OodAlgorithm::Vrex && self.beta_grid.is_empty() {
            return Err(Error::Config("vrex needs a nonempty beta_grid".into()));
        }
        if self.beta_grid.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Config("beta_grid values must be positive".into()));
        }
        if self.lr_grid.is_empty() || self.wd_grid.is_empty() {
            return Err(Error::Config("lr_grid and wd_grid must be nonempty".into()));
        }
        if self.lr_grid.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.wd_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("lr values must be positive, wd values nonnegative".into()));
        }
        Ok(())
    }

    /// Grid in (β, lr, wd) order. ERM is the single point β = 0.
    pub fn grid(&self) -> Vec<GridPoint> {
        let betas = match self.algorithm {
            OodAlgorithm::Erm => vec![0.0],
            OodAlgorithm::Vrex => self.beta_grid.clone(),
        };
        let mut out = Vec::new();
        for &beta in &betas {
            for &lr in &self.lr_grid {
                for &wd in &self.wd_grid {
                    out.push(GridPoint { beta, lr, wd });
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let a = match self.algorithm {
            OodAlgorithm::Erm => "erm",
            OodAlgorithm::Vrex => "vrex",
        };
        let t = match self.tune_mode {
            TuneMode::Iid => "iid",
            TuneMode::Ood => "ood",
        };
        format!("{a}-{t}")
    }
}

/// Trains `net` on the environments with the vREx objective over per-env
/// mean cross-entropy. Every step takes the same batch positions from each
/// environment; a smaller environment maps position `i` to row
/// `i · n_e / n_max`.
pub fn train_vrex(net: &mut Network, envs: &[Dataset], beta: f64, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if envs.is_empty() || envs.iter().any(|e| e.is_empty()) {
        return Err(Error::Data("every training environment needs rows".into()));
    }
    let n_max = envs.iter().map(Dataset::len).max().unwrap_or(0);
    run_sgd(
        net,
        n_max,
        cfg,
        |net, batch| {
            let mut risks = Vec::with_capacity(envs.len());
            let mut parts = Vec::with_capacity(envs.len());
            for env in envs {
                let rows: Vec<usize> = batch.iter().map(|&i| i * env.len() / n_max).collect();
                let xb = env.x.select_rows(&rows);
                let yb: Vec<usize> = rows.iter().map(|&r| env.y[r]).collect();
                let trace = net.forward_trace(&xb)?;
                let (risk, grad) = cross_entropy_loss(&trace.logits, &yb)?;
                risks.push(risk);
                parts.push((trace, grad));
            }
            let weights = vrex_weights(&risks, beta);
            let mut total: Option<Vec<LayerGrad>> = None;
            for ((trace, grad), w) in parts.into_iter().zip(weights) {
                let g = net.backward(&trace, &grad.scale(w))?;
                match total.as_mut() {
                    None => total = Some(g),
                    Some(t) => t.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
                }
            }
            Ok((vrex_objective(&risks, beta), total.expect("at least one environment")))
        },
        |_, _| Ok(()),
    )
}

/// Picks the grid point with the best accuracy on the tune split of
/// `mode`. Records must carry `point`, `beta`, `lr` and `wd` in `extra`;
/// records of every other split are dropped before anything is compared.
/// Ties go to the smallest β, then lr, then wd.
pub fn select_hyperparams(records: &[RunRecord], mode: TuneMode) -> Result<usize> {
    let split = mode.split();
    let get = |r: &RunRecord, k: &str| -> Result<f64> {
        r.extra
            .get(k)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Data(format!("record {} lacks {k}", r.run_id)))
    };
    let mut best: Option<(f64, f64, f64, f64, usize)> = None;
    for r in records.iter().filter(|r| r.split == split) {
        let point = get(r, "point")? as usize;
        let (b, lr, wd) = (get(r, "beta")?, get(r, "lr")?, get(r, "wd")?);
        let better = match best {
            None => true,
            Some((acc, bb, bl, bw, _)) => {
                r.value > acc
                    || (r.value == acc && (b, lr, wd).partial_cmp(&(bb, bl, bw)) == Some(std::cmp::Ordering::Less))
            }
        };
        if better {
            best = Some((r.value, b, lr, wd, point));
        }
    }
    best.map(|b| b.4)
        .ok_or_else(|| Error::Data(format!("no {} records to select from", split.as_str())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OodExperimentConfig {
    pub task: String,
    /// Training environments come from `env_correlations`, the test
    /// environment from `ood_correlation`.
    pub shift: ShiftSpec,
    pub tune_correlation: f64,
    pub arch: Arch,
    /// Settings for the initialization bank and the base of every grid run.
    pub pretrain: TrainConfig,
    pub n_episodes: usize,
    pub distill: DistillSpec,
    pub iid_holdout: f64,
    pub variants: Vec<OodConfig>,
}

impl Default for OodExperimentConfig {
    fn default() -> Self {
        let mut variants = Vec::new();
        for algorithm in [OodAlgorithm::Erm, OodAlgorithm::Vrex] {
            for init in [OodInit::Scratch, OodInit::Cat, OodInit::Distill] {
                variants.push(OodConfig {
                    algorithm,
                    init,
                    ..OodConfig::default()
                });
            }
        }
        Self {
            task: "synthetic-ood".into(),
            shift: ShiftSpec {
                env_correlations: vec![0.95, 0.85, 0.75],
                n_per_env: 1000,
                ..ShiftSpec::default()
            },
            tune_correlation: 0.5,
            arch: Arch::default(),
            pretrain: TrainConfig {
                lr: 0.05,
                momentum: 0.9,
                weight_decay: 0.0,
                epochs: 20,
                batch_size: 64,
                schedule: Schedule::Cosine,
                seed: 0,
            },
            n_episodes: 5,
            distill: DistillSpec {
                mode: DistillMode::Kl,
                tau: 10.0,
                alpha: 0.0,
                student_hidden: vec![64, 32],
            },
            iid_holdout: 0.2,
            variants,
        }
    }
}

impl OodExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.shift.validate()?;
        self.pretrain.validate()?;
        if !(0.0..=1.0).contains(&self.tune_correlation) {
            return Err(Error::Config("tune_correlation must lie in [0, 1]".into()));
        }
        if !(self.iid_holdout > 0.0 && self.iid_holdout < 1.0) {
            return Err(Error::Config("iid_holdout must lie in (0, 1)".into()));
        }
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no OOD variants listed".into()));
        }
        self.variants.iter().try_for_each(OodConfig::validate)
    }

    /// Train environments, then the tune environment, then the test one.
    pub fn environments(&self, group: u64) -> Result<OodTask> {
        let data = gen_shift(&self.shift, derive_seed(group, "data", 0))?;
        let n = data.train_envs.len();
        let mut rng = Rng::for_data(derive_seed(group, "tune-env", 0));
        let (tune, _) = sample_rows(&self.shift, self.shift.n_per_env, self.tune_correlation, n as u32, &mut rng);
        let mut test = data.ood_test;
        test.env = vec![n as u32 + 1; test.len()];
        let mut envs = data.train_envs;
        envs.push(tune);
        envs.push(test);
        env_partition(
            &envs,
            &EnvRoles {
                train: (0..n).collect(),
                tune: n,
                test: n + 1,
            },
        )
    }
}

/// Splits every training environment into fit rows and a pooled held-out
/// set, holding out `fraction` of the pooled rows.
fn iid_split(train: &[Dataset], fraction: f64, seed: u64) -> Result<(Vec<Dataset>, Dataset)> {
    let refs: Vec<&Dataset> = train.iter().collect();
    let pooled = Dataset::concat(&refs)?;
    let (fit, held) = split_holdout(&pooled, fraction, seed);
    let envs = train
        .iter()
        .map(|e| {
            let rows: Vec<usize> = (0..fit.len()).filter(|&i| fit.env[i] == e.env[0]).collect();
            fit.subset(&rows)
        })
        .collect();
    Ok((envs, held))
}

/// Frozen features for every dataset, or the raw inputs for scratch runs.
type Featurizer = Box<dyn Fn(&Matrix) -> Result<Matrix> + Sync>;

/// All variants on one seed group.
pub fn run_ood_group(cfg: &OodExperimentConfig, group: u64) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let task = cfg.environments(group)?;
    let needs_bank = cfg.variants.iter().any(|v| v.init != OodInit::Scratch);
    let pooled = {
        let refs: Vec<&Dataset> = task.train.iter().collect();
        Dataset::concat(&refs)?
    };
    let bank = if needs_bank {
        let seeds: Vec<u64> = (0..cfg.n_episodes as u64).map(|i| derive_seed(group, "episode", i)).collect();
        Some(train_episodes(&pooled, &cfg.arch, &cfg.pretrain, &seeds)?)
    } else {
        None
    };
    let student = if cfg.variants.iter().any(|v| v.init == OodInit::Distill) {
        let b = bank.as_ref().expect("bank built for non-scratch inits");
        Some(distill(b, &cfg.distill, &pooled, &cfg.pretrain.with_seed(derive_seed(group, "distill", 0)))?)
    } else {
        None
    };
    let n = cfg.n_episodes;
    let mut out = Vec::new();
    for (vi, variant) in cfg.variants.iter().enumerate() {
        let (method, featurize): (String, Featurizer) = match variant.init {
            OodInit::Scratch => ("erm".into(), Box::new(|x: &Matrix| Ok(x.clone()))),
            OodInit::Cat => {
                let b = bank.clone().expect("bank built");
                (format!("cat{n}"), Box::new(move |x: &Matrix| cat_features(&b, x)))
            }
            OodInit::Distill => {
                let s = student.clone().expect("student built");
                (format!("distill{n}"), Box::new(move |x: &Matrix| s.features(x)))
            }
        };
        let feat = |d: &Dataset| -> Result<Dataset> { d.with_features(featurize(&d.x)?) };
        let train: Vec<Dataset> = task.train.iter().map(feat).collect::<Result<_>>()?;
        let (fit_envs, tune_set) = match variant.tune_mode {
            TuneMode::Iid => iid_split(&train, cfg.iid_holdout, derive_seed(group, "iid-holdout", 0))?,
            TuneMode::Ood => (train.clone(), feat(&task.tune)?),
        };
        let test = feat(&task.test)?;
        let n_in = test.n_features();
        let k = cfg.shift.n_classes;
        let run_id = format!("ood-g{group}");
        let task_name = format!("{}/{}", cfg.task, variant.label());

        let mut tune_records = Vec::new();
        let mut models = Vec::new();
        for (pi, p) in variant.grid().into_iter().enumerate() {
            let seed = derive_seed(group, "ood-run", vi as u64);
            let mut net = match variant.init {
                OodInit::Scratch => cfg.arch.build(n_in, k, seed)?,
                _ => {
                    let head = DenseLayer::glorot(n_in, k, Activation::Linear, &mut Rng::for_init(seed));
                    Network::new(vec![head], HeadKind::Linear)?
                }
            };
            let tc = TrainConfig {
                lr: p.lr,
                weight_decay: p.wd,
                ..cfg.pretrain.with_seed(seed)
            };
            train_vrex(&mut net, &fit_envs, p.beta, &tc)?;
            let acc = accuracy(&net.predict(&tune_set.x)?, &tune_set.y);
            tune_records.push(
                RunRecord::new(&run_id, group, &method, &task_name, variant.tune_mode.split(), &format!("accuracy_p{pi}"), acc)
                    .with("point", pi)
                    .with("beta", fmt_g6(p.beta))
                    .with("lr", fmt_g6(p.lr))
                    .with("wd", fmt_g6(p.wd)),
            );
            models.push((net, p));
        }
        let chosen = select_hyperparams(&tune_records, variant.tune_mode)?;
        let (net, p) = &models[chosen];
        let acc = accuracy(&net.predict(&test.x)?, &test.y);
        out.extend(tune_records);
        out.push(
            RunRecord::new(&run_id, group, &method, &task_name, Split::OodTest, "accuracy", acc)
                .with("point", chosen)
                .with("beta", fmt_g6(p.beta))
                .with("lr", fmt_g6(p.lr))
                .with("wd", fmt_g6(p.wd)),
        );
    }
    Ok(out)
}
