use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layer::{layer_block, stack_backward, stack_forward};
use crate::nn::loss::cosine_distill_loss_skip_zero;
use crate::nn::{
    ce_kl_distill_loss, kl_distill_loss, run_sgd, Activation, DenseLayer,
    HeadKind, LayerGrad, Network, ParamBlock, Parameterized, TrainConfig,
};
use crate::richrep::bank::RepresentationBank;
use crate::rng::Rng;
use crate::tasks::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    /// Match each teacher's tempered class distribution.
    Kl,
    /// Labels mixed with the tempered teacher distributions.
    CeKl,
    /// Match each teacher's representation directly (teacher heads are
    /// the identity).
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DistillSpec {
    pub mode: DistillMode,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Ignored unless `mode` is `ce_kl`.
    #[serde(default)]
    pub alpha: f64,
    /// Hidden widths of the student trunk.
    pub student_hidden: Vec<usize>,
}

fn default_tau() -> f64 {
    10.0
}

impl DistillSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Parameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.student_hidden.is_empty() || self.student_hidden.contains(&0) {
            return Err(Error::Parameter("student needs nonzero hidden widths".into()));
        }
        Ok(())
    }
}

/// Shared trunk plus one output map `w_i` per teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub trunk: Vec<DenseLayer>,
    pub heads: Vec<DenseLayer>,
}

impl Student {
    /// Glorot trunk and heads drawn in order from the init stream of
    /// `seed`. Head `i` outputs teacher `i`'s logits, or its representation
    /// in cosine mode.
    pub fn fresh(bank: &RepresentationBank, spec: &DistillSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::for_init(seed);
        let mut trunk = Vec::new();
        let mut prev = bank.input_dim();
        for &h in &spec.student_hidden {
            trunk.push(DenseLayer::glorot(prev, h, Activation::Relu, &mut rng));
            prev = h;
        }
        let heads = bank
            .members()
            .iter()
            .map(|m| {
                let out = match spec.mode {
                    DistillMode::Cosine => m.feature_dim(),
                    _ => m.n_classes(),
                };
                DenseLayer::glorot(prev, out, Activation::Linear, &mut rng)
            })
            .collect();
        Ok(Self { trunk, heads })
    }

    /// Student initialized at a copy of `net`'s trunk, one copy of its
    /// linear head per teacher.
    pub fn from_network(net: &Network, n_heads: usize) -> Result<Self> {
        if net.head_kind() != HeadKind::Linear || net.trunk().is_empty() {
            return Err(Error::Parameter("student init needs a linear-head network with a trunk".into()));
        }
        Ok(Self {
            trunk: net.trunk().to_vec(),
            heads: vec![net.head().clone(); n_heads],
        })
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        Ok(stack_forward(&self.trunk, x)?.pop().unwrap())
    }

    /// Trunk with head `w_0` attached, as a plain network.
    pub fn into_network(self) -> Result<Network> {
        let mut layers = self.trunk;
        layers.push(self.heads.into_iter().next().expect("student has heads"));
        Network::new(layers, HeadKind::Linear)
    }
}

impl Parameterized for Student {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        self.trunk
            .iter_mut()
            .chain(self.heads.iter_mut())
            .map(layer_block)
            .collect()
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.trunk
            .iter()
            .chain(&self.heads)
            .map(|l| (l.n_out(), l.n_in()))
            .collect()
    }
}

/// Frozen teacher outputs on every training row: `v_i(Φ_i(x))`, or
/// `Φ_i(x)` in cosine mode.
pub fn teacher_targets(bank: &RepresentationBank, mode: DistillMode, x: &Matrix) -> Result<Vec<Matrix>> {
    bank.members()
        .iter()
        .map(|m| match mode {
            DistillMode::Cosine => m.features(x),
            _ => m.logits(x),
        })
        .collect()
}

/// Summed per-teacher loss on rows `batch` and its gradient (trunk blocks
/// then heads).
pub fn distill_loss_grad(
    student: &Student,
    targets: &[Matrix],
    spec: &DistillSpec,
    x: &Matrix,
    labels: &[usize],
    batch: &[usize],
) -> Result<(f64, Vec<LayerGrad>)> {
    if targets.len() != student.heads.len() {
        return Err(Error::Shape(format!(
            "{} teachers for {} student heads",
            targets.len(),
            student.heads.len()
        )));
    }
    let xb = x.select_rows(batch);
    let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
    let acts = stack_forward(&student.trunk, &xb)?;
    let feats = acts.last().unwrap();
    let mut grad_feat = Matrix::zeros(feats.rows(), feats.cols());
    let mut head_grads = Vec::with_capacity(student.heads.len());
    let mut total = 0.0;
    for (head, target) in student.heads.iter().zip(targets) {
        let out = head.forward(feats)?;
        let t = target.select_rows(batch);
        let (loss, g) = match spec.mode {
            DistillMode::Kl => kl_distill_loss(&t, &out, spec.tau)?,
            DistillMode::CeKl => ce_kl_distill_loss(&t, &out, &yb, spec.alpha, spec.tau)?,
            DistillMode::Cosine => cosine_distill_loss_skip_zero(&t, &out)?,
        };
        total += loss;
        let (hg, gi) = head.backward(feats, &out, g, true);
        for (a, b) in grad_feat.as_mut_slice().iter_mut().zip(gi.unwrap().as_slice()) {
            *a += b;
        }
        head_grads.push(hg);
    }
    let (mut grads, _) = stack_backward(&student.trunk, &acts, grad_feat, false);
    grads.extend(head_grads);
    Ok((total, grads))
}

/// Trains `student` against the frozen teachers of `bank`.
pub fn distill_student(
    student: &mut Student,
    bank: &RepresentationBank,
    spec: &DistillSpec,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Data("distillation needs a nonempty dataset".into()));
    }
    if spec.mode == DistillMode::CeKl {
        if let Some(m) = bank.members().iter().find(|m| m.n_classes() != data.n_classes) {
            return Err(Error::Shape(format!(
                "teacher has {} classes, labels have {}",
                m.n_classes(),
                data.n_classes
            )));
        }
    }
    let targets = teacher_targets(bank, spec.mode, &data.x)?;
    run_sgd(
        student,
        data.len(),
        config,
        |s, batch| distill_loss_grad(s, &targets, spec, &data.x, &data.y, batch),
        |_, _| Ok(()),
    )
}

/// DISTILL-n: a fresh student seeded by `config.seed`, returned as its
/// trunk with the first head attached.
pub fn distill(
    bank: &RepresentationBank,
    spec: &DistillSpec,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<Network> {
    let mut student = Student::fresh(bank, spec, config.seed)?;
    distill_student(&mut student, bank, spec, data, config)?;
    student.into_network()
}
