//! Oracles shared by the integration tests. Nothing here calls into the
//! library's own reference implementations.

#![allow(dead_code)]

use richrep::experiments::{RunRecord, Split};
use richrep::nn::{
    ce_kl_distill_loss, cosine_distill_loss, cross_entropy_loss, kl_distill_loss, Activation,
    DenseLayer, HeadKind, LayerGrad, Network, Parameterized,
};
use richrep::{Matrix, Rng};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub enum GradLoss {
    CrossEntropy,
    Kl { tau: f64 },
    CeKl { alpha: f64, tau: f64 },
    CosineDistill,
}

impl GradLoss {
    pub fn name(&self) -> String {
        match self {
            GradLoss::CrossEntropy => "ce".into(),
            GradLoss::Kl { tau } => format!("kl(tau={tau})"),
            GradLoss::CeKl { alpha, tau } => format!("ce+kl(alpha={alpha},tau={tau})"),
            GradLoss::CosineDistill => "cosine-distill".into(),
        }
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let v = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, v).unwrap()
}

/// Three dense layers (two ReLU, one linear head) with Gaussian weights.
pub fn random_net(dims: [usize; 4], rng: &mut Rng) -> Network {
    let layer = |i: usize, act, rng: &mut Rng| {
        let w = random_matrix(dims[i + 1], dims[i], rng).scale(0.7);
        let b = (0..dims[i + 1]).map(|_| 0.1 * rng.normal()).collect();
        DenseLayer::new(w, b, act).unwrap()
    };
    let layers = vec![
        layer(0, Activation::Relu, rng),
        layer(1, Activation::Relu, rng),
        layer(2, Activation::Linear, rng),
    ];
    Network::new(layers, HeadKind::Linear).unwrap()
}

/// [`random_net`] redrawn until no row of `x` maps to an all-zero
/// representation (cosine distillation is undefined there).
pub fn live_net(dims: [usize; 4], x: &Matrix, rng: &mut Rng) -> Network {
    loop {
        let net = random_net(dims, rng);
        let f = net.features(x).unwrap();
        if f.iter_rows().all(|r| r.iter().any(|v| *v != 0.0)) {
            return net;
        }
    }
}

pub struct GradProblem {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub teacher_logits: Matrix,
    pub teacher_feats: Matrix,
}

impl GradProblem {
    pub fn new(n: usize, dims: [usize; 4], rng: &mut Rng) -> Self {
        let x = random_matrix(n, dims[0], rng);
        let labels = (0..n).map(|_| rng.below(dims[3])).collect();
        let teacher_logits = random_matrix(n, dims[3], rng).scale(2.0);
        // Strictly positive so no teacher row has zero norm.
        let teacher_feats = random_matrix(n, dims[2], rng).map(|v| v.abs() + 0.1);
        Self {
            x,
            labels,
            teacher_logits,
            teacher_feats,
        }
    }

    pub fn loss(&self, net: &Network, kind: GradLoss) -> (f64, Vec<LayerGrad>) {
        let trace = net.forward_trace(&self.x).unwrap();
        match kind {
            GradLoss::CosineDistill => {
                let (l, g) = cosine_distill_loss(&self.teacher_feats, trace.penultimate()).unwrap();
                let mut grads = net.trunk_backward(&trace, g);
                let h = net.head();
                grads.push(LayerGrad::zeros(h.weights.rows(), h.weights.cols()));
                (l, grads)
            }
            _ => {
                let (l, g) = match kind {
                    GradLoss::CrossEntropy => cross_entropy_loss(&trace.logits, &self.labels),
                    GradLoss::Kl { tau } => kl_distill_loss(&self.teacher_logits, &trace.logits, tau),
                    GradLoss::CeKl { alpha, tau } => {
                        ce_kl_distill_loss(&self.teacher_logits, &trace.logits, &self.labels, alpha, tau)
                    }
                    GradLoss::CosineDistill => unreachable!(),
                }
                .unwrap();
                (l, net.backward(&trace, &g).unwrap())
            }
        }
    }
}

/// Flattened (block, is_bias, index) coordinates in parameter order.
fn coordinates(net: &Network) -> Vec<(usize, bool, usize)> {
    let mut out = Vec::new();
    for (b, (o, i)) in net.param_shapes().into_iter().enumerate() {
        out.extend((0..o * i).map(|j| (b, false, j)));
        out.extend((0..o).map(|j| (b, true, j)));
    }
    out
}

fn nudge(net: &mut Network, c: (usize, bool, usize), delta: f64) {
    let mut blocks = net.param_blocks();
    let blk = &mut blocks[c.0];
    if c.1 {
        blk.bias[c.2] += delta;
    } else {
        blk.weights[c.2] += delta;
    }
}

fn analytic(grads: &[LayerGrad], c: (usize, bool, usize)) -> f64 {
    if c.1 {
        grads[c.0].bias[c.2]
    } else {
        grads[c.0].weights.as_slice()[c.2]
    }
}

/// Worst relative error between backprop and central differences over
/// `n_coords` coordinates drawn without replacement. The cosine-distill
/// loss does not reach the head, so only trunk coordinates are drawn
/// for it.
pub fn worst_relative_error(net: &Network, p: &GradProblem, kind: GradLoss, n_coords: usize, rng: &mut Rng) -> f64 {
    let (_, grads) = p.loss(net, kind);
    let head_block = net.layers().len() - 1;
    let mut coords: Vec<_> = coordinates(net)
        .into_iter()
        .filter(|c| !matches!(kind, GradLoss::CosineDistill) || c.0 != head_block)
        .collect();
    // Partial Fisher–Yates: the first n_coords entries are the sample.
    let take = n_coords.min(coords.len());
    for i in 0..take {
        let j = i + rng.below(coords.len() - i);
        coords.swap(i, j);
    }
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for &c in &coords[..take] {
        nudge(&mut probe, c, FD_STEP);
        let up = p.loss(&probe, kind).0;
        nudge(&mut probe, c, -2.0 * FD_STEP);
        let down = p.loss(&probe, kind).0;
        nudge(&mut probe, c, FD_STEP);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic(&grads, c);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

pub fn gradient_losses() -> Vec<GradLoss> {
    vec![
        GradLoss::CrossEntropy,
        GradLoss::Kl { tau: 1.0 },
        GradLoss::Kl { tau: 10.0 },
        GradLoss::CeKl { alpha: 0.9, tau: 4.0 },
        GradLoss::CosineDistill,
    ]
}

fn log1pexp(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Regularized two-class one-feature objective as a function of the slope
/// `w` (logit gap `2w·x + c`, penalty `l2·w²`), with the offset `c`
/// minimized by golden-section search.
pub fn scalar_profile(x: &[f64], y: &[usize], l2: f64, w: f64) -> f64 {
    let n = x.len() as f64;
    let f = |c: f64| -> f64 {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let z = 2.0 * w * xi + c;
                if yi == 1 {
                    log1pexp(-z)
                } else {
                    log1pexp(z)
                }
            })
            .sum::<f64>()
            / n
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (-50.0, 50.0);
    let mut c1 = b - g * (b - a);
    let mut c2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(c1), f(c2));
    for _ in 0..120 {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = f(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = f(c2);
        }
    }
    f(0.5 * (a + b)) + l2 * w * w
}

/// Minimum of [`scalar_profile`] over the grid `w ∈ [−10, 10]`, step 1e-3.
pub fn scalar_grid(x: &[f64], y: &[usize], l2: f64) -> f64 {
    (0..=20_000)
        .map(|i| scalar_profile(x, y, l2, -10.0 + i as f64 * 1e-3))
        .fold(f64::INFINITY, f64::min)
}

pub fn value(r: &[RunRecord], seed: u64, method: &str, split: Split, metric: &str) -> f64 {
    r.iter()
        .find(|x| x.seed == seed && x.method == method && x.split == split && x.metric == metric)
        .map(|x| x.value)
        .unwrap_or_else(|| panic!("no record {method}/{}/{metric} for seed {seed}", split.as_str()))
}

pub fn seeds(r: &[RunRecord]) -> Vec<u64> {
    let mut s: Vec<u64> = r.iter().map(|x| x.seed).collect();
    s.dedup();
    s
}
