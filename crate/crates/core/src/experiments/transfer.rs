use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::eval::{probe_accuracy, probe_fit, split_halves};
use crate::experiments::records::{fmt_g6, RunRecord, Split};
use crate::experiments::seeds::derive_seed;
use crate::nn::{accuracy, TrainConfig};
use crate::probing::ProbeConfig;
use crate::richrep::{
    cat_features, distill, joint_training, leg_probe_gap, mean_softmax, naive_finetune,
    train_episode, train_episodes, two_stage_finetune, Arch, DistillMode, DistillSpec,
    Provenance,
};
use crate::tasks::{gen_shift, split_classes, ShiftSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub task: String,
    pub shift: ShiftSpec,
    pub arch: Arch,
    pub pretrain: TrainConfig,
    pub probe: ProbeConfig,
    pub n_episodes: usize,
    /// Omit to skip DISTILL-n.
    pub distill: Option<DistillSpec>,
    pub distill_train: TrainConfig,
    /// Leg count of the jointly trained baseline; 0 skips it.
    pub joint_legs: usize,
    /// Omit to skip fine-tuning.
    pub finetune: Option<TrainConfig>,
    pub stage2: TrainConfig,
    /// Weight-decay values for the single-network ablation (0 is always
    /// the reference).
    pub wd_ablation: Vec<f64>,
    /// Task on which the weight-decay ablation measures transfer.
    pub class_split: ClassSplitConfig,
}

/// Pretraining on `base` classes, linear probing on `novel` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ClassSplitConfig {
    pub shift: ShiftSpec,
    pub base_classes: Vec<usize>,
    pub novel_classes: Vec<usize>,
}

impl Default for ClassSplitConfig {
    fn default() -> Self {
        Self {
            shift: ShiftSpec {
                n_classes: 10,
                d_core: 10,
                d_spur: 10,
                d_noise: 10,
                n_per_env: 1000,
                ..ShiftSpec::default()
            },
            base_classes: (0..5).collect(),
            novel_classes: (5..10).collect(),
        }
    }
}

impl Default for TransferConfig {
    fn default() -> Self {
        let pretrain = TrainConfig {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 30,
            batch_size: 64,
            schedule: crate::nn::Schedule::Cosine,
            seed: 0,
        };
        Self {
            task: "synthetic-shift".into(),
            shift: ShiftSpec {
                n_per_env: 2000,
                ..ShiftSpec::default()
            },
            arch: Arch::default(),
            pretrain: pretrain.clone(),
            probe: ProbeConfig {
                l2: 1e-2,
                max_iters: 300,
                grad_tol: 1e-4,
                standardize: true,
            },
            n_episodes: 5,
            distill: Some(DistillSpec {
                mode: DistillMode::Kl,
                tau: 10.0,
                alpha: 0.0,
                student_hidden: vec![64, 32],
            }),
            distill_train: pretrain.clone(),
            joint_legs: 2,
            finetune: Some(TrainConfig {
                lr: 0.01,
                epochs: 20,
                ..pretrain
            }),
            stage2: TrainConfig {
                lr: 1e-3,
                momentum: 0.9,
                weight_decay: 0.0,
                epochs: 1,
                batch_size: 64,
                schedule: crate::nn::Schedule::Constant,
                seed: 0,
            },
            wd_ablation: vec![2e-2],
            class_split: ClassSplitConfig::default(),
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        self.shift.validate()?;
        self.pretrain.validate()?;
        self.probe.validate()?;
        if self.n_episodes == 0 {
            return Err(crate::Error::Config("n_episodes must be at least 1".into()));
        }
        if let Some(d) = &self.distill {
            d.validate()?;
        }
        Ok(())
    }
}

/// One seed group of the transfer pipeline. Probe-ID fits on the pooled
/// training environments and scores `id_test`; probe-OOD and fine-tuning fit
/// on one seeded half of `ood_test` and score the other half.
pub fn run_transfer_group(cfg: &TransferConfig, group: u64) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let run_id = format!("transfer-g{group}");
    let data = gen_shift(&cfg.shift, derive_seed(group, "data", 0))?;
    let train = data.pooled_train();
    let (ood_fit, ood_eval) = split_halves(&data.ood_test, derive_seed(group, "ood-split", 0));
    let rec = |method: &str, split: Split, metric: &str, value: f64| {
        RunRecord::new(&run_id, group, method, &cfg.task, split, metric, value)
    };
    let mut out = Vec::new();
    let probe_pair = |f: &dyn Fn(&crate::Matrix) -> Result<crate::Matrix>| -> Result<(f64, f64)> {
        Ok((
            probe_accuracy(f, &train, &data.id_test, &cfg.probe)?,
            probe_accuracy(f, &ood_fit, &ood_eval, &cfg.probe)?,
        ))
    };

    let seeds: Vec<u64> = (0..cfg.n_episodes as u64)
        .map(|i| derive_seed(group, "episode", i))
        .collect();
    let bank = train_episodes(&train, &cfg.arch, &cfg.pretrain, &seeds)?;

    let erm = bank.member(0);
    let (id, ood) = probe_pair(&|x| erm.features(x))?;
    out.push(rec("erm", Split::IdTest, "probe_accuracy", id));
    out.push(rec("erm", Split::OodTest, "probe_accuracy", ood));
    out.push(rec("erm", Split::IdTest, "accuracy", accuracy(&erm.predict(&data.id_test.x)?, &data.id_test.y)));
    out.push(rec("erm", Split::OodTest, "accuracy", accuracy(&erm.predict(&ood_eval.x)?, &ood_eval.y)));

    for n in 1..=bank.len() {
        let sub = bank.prefix(n)?;
        let feats = |x: &crate::Matrix| cat_features(&sub, x);
        let id_fit = probe_fit(&feats, &train, &data.id_test, &cfg.probe)?;
        let ood = probe_accuracy(&feats, &ood_fit, &ood_eval, &cfg.probe)?;
        let m = format!("cat{n}");
        // Training cost of the ID probe; adding blocks can only lower it.
        out.push(rec(&m, Split::IdTrain, "probe_cost", id_fit.cost).with("n", n));
        out.push(rec(&m, Split::IdTest, "probe_accuracy", id_fit.eval_accuracy.unwrap_or(0.0)).with("n", n));
        out.push(rec(&m, Split::OodTest, "probe_accuracy", ood).with("n", n));
    }

    if let Some(spec) = &cfg.distill {
        let student = distill(
            &bank,
            spec,
            &train,
            &cfg.distill_train.with_seed(derive_seed(group, "distill", 0)),
        )?;
        let (id, ood) = probe_pair(&|x| student.features(x))?;
        let m = format!("distill{}", bank.len());
        out.push(rec(&m, Split::IdTest, "probe_accuracy", id));
        out.push(rec(&m, Split::OodTest, "probe_accuracy", ood));
    }

    if cfg.joint_legs > 0 {
        let n = cfg.joint_legs;
        let jseed = derive_seed(group, "joint", 0);
        let joint = joint_training(&train, &cfg.arch, n, &cfg.pretrain.with_seed(jseed))?
            .to_bank(Provenance::JointTraining, jseed)?;
        let (id, ood) = probe_pair(&|x| cat_features(&joint, x))?;
        let m = format!("joint{n}");
        out.push(rec(&m, Split::IdTest, "probe_accuracy", id));
        out.push(rec(&m, Split::OodTest, "probe_accuracy", ood));
        let jgap = leg_probe_gap(&joint, &train, &data.id_test, &cfg.probe)?;
        let cat = bank.prefix(n.min(bank.len()))?;
        let cgap = leg_probe_gap(&cat, &train, &data.id_test, &cfg.probe)?;
        for (method, gap) in [(m.clone(), &jgap), (format!("cat{}", cat.len()), &cgap)] {
            for (i, a) in gap.accuracies.iter().enumerate() {
                out.push(rec(&method, Split::IdTest, &format!("leg{i}_probe_accuracy"), *a));
            }
            out.push(rec(&method, Split::IdTest, "leg_gap", gap.gap));
        }
    }

    if let Some(ft) = &cfg.finetune {
        let fseed = derive_seed(group, "finetune", 0);
        let ft = ft.with_seed(fseed);
        let naive = naive_finetune(&bank, &ood_fit, &ft)?;
        out.push(rec("init-ft", Split::OodTest, "finetune_accuracy", accuracy(&naive.predict(&ood_eval.x)?, &ood_eval.y)));
        let two = two_stage_finetune(&bank, &ood_fit, &ft, &cfg.stage2.with_seed(fseed))?;
        out.push(rec("2ft", Split::OodTest, "finetune_accuracy", accuracy(&two.predict(&ood_eval.x)?, &ood_eval.y)));
        let leg_logits = two
            .legs
            .members()
            .iter()
            .map(|m| m.logits(&ood_eval.x))
            .collect::<Result<Vec<_>>>()?;
        let sub = mean_softmax(&leg_logits)?;
        out.push(rec("catsub", Split::OodTest, "finetune_accuracy", accuracy(&sub.argmax_rows(), &ood_eval.y)).with("stage2", "skipped"));
        let best_leg = leg_logits
            .iter()
            .map(|l| accuracy(&l.argmax_rows(), &ood_eval.y))
            .fold(0.0, f64::max);
        out.push(rec("best-leg-ft", Split::OodTest, "finetune_accuracy", best_leg));
    }

    if !cfg.wd_ablation.is_empty() {
        out.extend(run_wd_ablation(cfg, group)?);
    }
    Ok(out)
}

/// Probe-transfer accuracy of single networks pretrained on the base
/// classes with weight decay 0 and each value of `wd_ablation`. Probes fit
/// on novel-class training rows and score novel-class `id_test` rows.
pub fn run_wd_ablation(cfg: &TransferConfig, group: u64) -> Result<Vec<RunRecord>> {
    let cs = &cfg.class_split;
    let run_id = format!("transfer-g{group}");
    let task = format!("{}-classsplit", cfg.task);
    let data = gen_shift(&cs.shift, derive_seed(group, "classsplit-data", 0))?;
    let (base, novel) = split_classes(&data.pooled_train(), &cs.base_classes, &cs.novel_classes)?;
    let (_, novel_test) = split_classes(&data.id_test, &cs.base_classes, &cs.novel_classes)?;
    let seed = derive_seed(group, "classsplit-episode", 0);
    let mut out = Vec::new();
    for wd in std::iter::once(0.0).chain(cfg.wd_ablation.iter().copied()) {
        let c = TrainConfig { weight_decay: wd, ..cfg.pretrain.clone() };
        let net = train_episode(&base, &cfg.arch, &c, seed)?;
        let acc = probe_accuracy(&|x| net.features(x), &novel, &novel_test, &cfg.probe)?;
        let method = if wd == 0.0 { "erm".to_string() } else { format!("erm-wd{}", fmt_g6(wd)) };
        out.push(RunRecord::new(&run_id, group, method, &task, Split::IdTest, "probe_transfer_accuracy", acc).with("wd", fmt_g6(wd)));
    }
    Ok(out)
}
