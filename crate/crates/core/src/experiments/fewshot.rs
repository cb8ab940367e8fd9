use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::eval::{mean, sample_std};
use crate::experiments::records::{RunRecord, Split};
use crate::experiments::seeds::derive_seed;
use crate::matrix::{dot, norm, Matrix};
use crate::nn::{accuracy, Schedule, TrainConfig};
use crate::probing::{fit_probe_k, ProbeConfig};
use crate::richrep::{
    cat_features, default_snapshot_epochs, distill, snapshot_episode, train_episodes, Arch,
    DistillMode, DistillSpec, RepresentationBank,
};
use crate::rng::Rng;
use crate::tasks::{gen_attribute_classes, sample_episode, split_classes, AttributeSpec, EpisodeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FewshotClassifier {
    /// Regularized linear probe fitted on the support set.
    Linear,
    /// Cosine similarity to the support-set class means.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotConfig {
    pub count: usize,
    /// Snapshot runs use `lr_multiplier ×` the pretraining rate.
    pub lr_multiplier: f64,
    /// Snapshot run settings; `None` reuses `pretrain`. Either way the
    /// learning rate is scaled by `lr_multiplier`.
    pub train: Option<TrainConfig>,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            count: 5,
            lr_multiplier: 8.0,
            train: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct FewshotConfig {
    pub task: String,
    pub attributes: AttributeSpec,
    pub base_classes: Vec<usize>,
    pub novel_classes: Vec<usize>,
    pub arch: Arch,
    pub pretrain: TrainConfig,
    /// Any of `input` (raw features), `erm`, `cat{n}`, `distill{n}`, `cat{n}-s`, `snap{i}`,
    /// `best-snap`.
    pub methods: Vec<String>,
    pub snapshots: SnapshotConfig,
    pub distill: DistillSpec,
    pub distill_train: TrainConfig,
    pub episode: EpisodeSpec,
    pub n_eval: usize,
    pub classifier: FewshotClassifier,
    pub probe: ProbeConfig,
}

impl Default for FewshotConfig {
    fn default() -> Self {
        let pretrain = TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 30,
            batch_size: 64,
            schedule: Schedule::Cosine,
            seed: 0,
        };
        Self {
            task: "synthetic-fewshot".into(),
            attributes: AttributeSpec {
                signal: 2.0,
                ..AttributeSpec::default()
            },
            base_classes: (0..10).collect(),
            novel_classes: (10..20).collect(),
            arch: Arch {
                hidden: vec![64, 32],
                cosine_head: true,
            },
            pretrain: pretrain.clone(),
            methods: ["erm", "cat5", "cat5-s", "best-snap"].map(String::from).to_vec(),
            snapshots: SnapshotConfig {
                count: 5,
                lr_multiplier: 8.0,
                // A long constant-rate run; the weight decay keeps ReLU
                // units from dying at the raised rate.
                train: Some(TrainConfig {
                    weight_decay: 0.01,
                    epochs: 150,
                    schedule: Schedule::Constant,
                    ..pretrain.clone()
                }),
            },
            distill: DistillSpec {
                mode: DistillMode::Kl,
                tau: 10.0,
                alpha: 0.0,
                student_hidden: vec![64, 32],
            },
            distill_train: pretrain,
            episode: EpisodeSpec::default(),
            n_eval: 600,
            classifier: FewshotClassifier::Cosine,
            probe: ProbeConfig {
                l2: 0.1,
                max_iters: 100,
                grad_tol: 1e-4,
                standardize: false,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Input,
    Erm,
    Cat(usize),
    Distill(usize),
    CatSnap(usize),
    Snap(usize),
    BestSnap,
}

fn parse_method(s: &str) -> Result<Method> {
    let num = |t: &str| {
        t.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("bad method {s:?}")))
    };
    if s == "input" {
        Ok(Method::Input)
    } else if s == "erm" {
        Ok(Method::Erm)
    } else if s == "best-snap" {
        Ok(Method::BestSnap)
    } else if let Some(n) = s.strip_prefix("cat").and_then(|r| r.strip_suffix("-s")) {
        Ok(Method::CatSnap(num(n)?))
    } else if let Some(n) = s.strip_prefix("cat") {
        Ok(Method::Cat(num(n)?))
    } else if let Some(n) = s.strip_prefix("distill") {
        Ok(Method::Distill(num(n)?))
    } else if let Some(i) = s.strip_prefix("snap") {
        i.parse::<usize>()
            .map(Method::Snap)
            .map_err(|_| Error::Config(format!("bad method {s:?}")))
    } else {
        Err(Error::Config(format!("unknown few-shot method {s:?}")))
    }
}

impl FewshotConfig {
    pub fn validate(&self) -> Result<()> {
        self.attributes.validate()?;
        self.pretrain.validate()?;
        self.probe.validate()?;
        if self.n_eval == 0 {
            return Err(Error::Config("n_eval must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no few-shot methods listed".into()));
        }
        for m in &self.methods {
            if let Method::Snap(i) = parse_method(m)? {
                if i >= self.snapshots.count {
                    return Err(Error::Config(format!("{m}: only {} snapshots", self.snapshots.count)));
                }
            }
        }
        Ok(())
    }
}

/// Fits the per-episode classifier on `support` and returns query accuracy.
pub fn episode_accuracy(
    classifier: FewshotClassifier,
    support: &Matrix,
    support_y: &[usize],
    query: &Matrix,
    query_y: &[usize],
    n_way: usize,
    probe: &ProbeConfig,
) -> Result<f64> {
    let pred = match classifier {
        FewshotClassifier::Linear => {
            fit_probe_k(support, support_y, n_way.max(2), probe, &mut Rng::new(0))?.predict(query)?
        }
        FewshotClassifier::Cosine => {
            let mut protos = Matrix::zeros(n_way, support.cols());
            let mut counts = vec![0usize; n_way];
            for (row, &y) in support.iter_rows().zip(support_y) {
                for (p, v) in protos.row_mut(y).iter_mut().zip(row) {
                    *p += v;
                }
                counts[y] += 1;
            }
            query
                .iter_rows()
                .map(|q| {
                    let qn = norm(q).max(f64::MIN_POSITIVE);
                    let scores: Vec<f64> = (0..n_way)
                        .map(|c| {
                            let p = protos.row(c);
                            let pn = norm(p);
                            if counts[c] == 0 || pn == 0.0 {
                                f64::NEG_INFINITY
                            } else {
                                dot(p, q) / (pn * qn)
                            }
                        })
                        .collect();
                    crate::matrix::argmax(&scores)
                })
                .collect()
        }
    };
    Ok(accuracy(&pred, query_y))
}

/// Per-episode accuracies of several representations on the same
/// episodes. `features[m]` holds method `m`'s features for every novel row.
pub fn evaluate_episodes(
    features: &[Matrix],
    novel: &crate::tasks::Dataset,
    spec: &EpisodeSpec,
    n_eval: usize,
    classifier: FewshotClassifier,
    probe: &ProbeConfig,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    let mut accs = vec![Vec::with_capacity(n_eval); features.len()];
    for _ in 0..n_eval {
        let ep = sample_episode(novel, spec, rng)?;
        for (f, acc) in features.iter().zip(accs.iter_mut()) {
            acc.push(episode_accuracy(
                classifier,
                &f.select_rows(&ep.support_rows),
                &ep.support.y,
                &f.select_rows(&ep.query_rows),
                &ep.query.y,
                spec.n_way,
                probe,
            )?);
        }
    }
    Ok(accs)
}

/// One seed group: pretrain on the base classes, build each method's
/// representation, then score all methods on the same `n_eval` episodes
/// drawn from the novel classes.
pub fn run_fewshot_group(cfg: &FewshotConfig, group: u64) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let methods = cfg
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<Vec<_>>>()?;
    let data = gen_attribute_classes(&cfg.attributes, derive_seed(group, "data", 0))?;
    let (base, novel) = split_classes(&data, &cfg.base_classes, &cfg.novel_classes)?;

    let n_indep = methods
        .iter()
        .map(|m| match m {
            Method::Erm => 1,
            Method::Cat(n) | Method::Distill(n) => *n,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    let bank = if n_indep > 0 {
        let seeds: Vec<u64> = (0..n_indep as u64).map(|i| derive_seed(group, "episode", i)).collect();
        Some(train_episodes(&base, &cfg.arch, &cfg.pretrain, &seeds)?)
    } else {
        None
    };
    let n_snap = methods
        .iter()
        .map(|m| match m {
            Method::CatSnap(n) => *n,
            Method::Snap(_) | Method::BestSnap => cfg.snapshots.count,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    let snaps = if n_snap > 0 {
        let p = cfg.snapshots.train.as_ref().unwrap_or(&cfg.pretrain);
        let c = TrainConfig {
            lr: p.lr * cfg.snapshots.lr_multiplier,
            ..p.with_seed(derive_seed(group, "snapshot", 0))
        };
        let epochs = default_snapshot_epochs(c.epochs, n_snap.max(cfg.snapshots.count));
        Some(snapshot_episode(&base, &cfg.arch, &c, &epochs)?)
    } else {
        None
    };
    let need = |b: &Option<RepresentationBank>| b.clone().expect("bank built above");

    // One feature matrix per evaluated representation.
    let mut names = Vec::new();
    let mut feats = Vec::new();
    let mut snap_cols = BTreeMap::new();
    for (m, name) in methods.iter().zip(&cfg.methods) {
        match *m {
            Method::Input => feats.push(novel.x.clone()),
            Method::Erm => feats.push(need(&bank).member(0).features(&novel.x)?),
            Method::Cat(n) => feats.push(cat_features(&need(&bank).prefix(n)?, &novel.x)?),
            Method::Distill(n) => {
                let student = distill(
                    &need(&bank).prefix(n)?,
                    &cfg.distill,
                    &base,
                    &cfg.distill_train.with_seed(derive_seed(group, "distill", n as u64)),
                )?;
                feats.push(student.features(&novel.x)?);
            }
            Method::CatSnap(n) => feats.push(cat_features(&need(&snaps).prefix(n)?, &novel.x)?),
            Method::Snap(i) => feats.push(need(&snaps).member(i).features(&novel.x)?),
            Method::BestSnap => {
                let s = need(&snaps);
                for i in 0..s.len() {
                    snap_cols.insert(i, feats.len());
                    feats.push(s.member(i).features(&novel.x)?);
                    names.push(format!("#snap{i}"));
                }
                continue;
            }
        }
        names.push(name.clone());
    }

    let mut rng = Rng::new(derive_seed(group, "episodes", 0));
    let accs = evaluate_episodes(&feats, &novel, &cfg.episode, cfg.n_eval, cfg.classifier, &cfg.probe, &mut rng)?;

    let run_id = format!("fewshot-g{group}");
    let mut out = Vec::new();
    let mut push = |method: &str, a: &[f64], extra: Option<(&str, String)>| {
        let shot = format!("{}way{}shot", cfg.episode.n_way, cfg.episode.k_shot);
        let mut m = RunRecord::new(&run_id, group, method, &cfg.task, Split::Fewshot, "accuracy_mean", mean(a)).with("episodes", a.len()).with("setting", &shot);
        let mut s = RunRecord::new(&run_id, group, method, &cfg.task, Split::Fewshot, "accuracy_std", sample_std(a)).with("episodes", a.len()).with("setting", &shot);
        if let Some((k, v)) = extra {
            m = m.with(k, &v);
            s = s.with(k, &v);
        }
        out.push(m);
        out.push(s);
    };
    for (name, a) in names.iter().zip(&accs) {
        if !name.starts_with('#') {
            push(name, a, None);
        }
    }
    if methods.contains(&Method::BestSnap) {
        let (best, col) = snap_cols
            .iter()
            .map(|(&i, &c)| (i, c))
            .max_by(|a, b| mean(&accs[a.1]).total_cmp(&mean(&accs[b.1])).then(b.0.cmp(&a.0)))
            .expect("at least one snapshot");
        push("best-snap", &accs[col], Some(("snapshot", best.to_string())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Dataset;

    #[test]
    fn method_names() {
        assert_eq!(parse_method("cat5-s").unwrap(), Method::CatSnap(5));
        assert_eq!(parse_method("cat3").unwrap(), Method::Cat(3));
        assert_eq!(parse_method("distill2").unwrap(), Method::Distill(2));
        assert_eq!(parse_method("snap0").unwrap(), Method::Snap(0));
        assert!(parse_method("cat0").is_err());
        assert!(parse_method("wide").is_err());
    }

    #[test]
    fn oracle_representation_is_perfect() {
        // One coordinate per class, no noise.
        let n = 100;
        let k = 5;
        let mut x = Matrix::zeros(n, k);
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        for (i, &c) in y.iter().enumerate() {
            x[(i, c)] = 1.0;
        }
        let novel = Dataset::new(x.clone(), y, vec![0; n], k).unwrap();
        let spec = EpisodeSpec { n_way: 5, k_shot: 1, n_query: 15 };
        for clf in [FewshotClassifier::Linear, FewshotClassifier::Cosine] {
            let accs = evaluate_episodes(&[x.clone()], &novel, &spec, 20, clf, &FewshotConfig::default().probe, &mut Rng::new(1)).unwrap();
            assert!(accs[0].iter().all(|&a| a == 1.0), "{clf:?}");
        }
    }
}
