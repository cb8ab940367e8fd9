//! Full-batch linear probe: multinomial logistic regression with an L2
//! penalty on the weights, minimized by gradient descent with Armijo
//! backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::nn::loss::{log_softmax, softmax_in_place};
use crate::rng::Rng;

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_START: f64 = 1.0;
const MIN_STEP: f64 = 1e-20;
const STD_FLOOR: f64 = 1e-8;
const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Penalty `(l2 / 2)·‖W‖²`; the bias is not penalized.
    pub l2: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Standardize features with training-row mean and std before solving.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 0.0,
            max_iters: 5000,
            grad_tol: 1e-6,
            standardize: false,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::Parameter("grad_tol must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Parameter("l2 must be finite and nonnegative".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted probe. Weights and bias act on the raw (unstandardized)
/// features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// `n_classes × n_features`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// Regularized objective at the returned point.
    pub cost: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl ProbeResult {
    pub fn n_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        let mut out = features.matmul_t(&self.weights)?;
        for i in 0..out.rows() {
            axpy(1.0, &self.bias, out.row_mut(i));
        }
        Ok(out)
    }

    /// Argmax with lowest-index tie-break.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(features)?.argmax_rows())
    }

    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(features)?;
        Ok(crate::nn::accuracy(&pred, labels))
    }
}

struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            axpy(1.0, row, &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }
}

/// Objective over a fixed design matrix.
struct Objective<'a> {
    x: &'a Matrix,
    labels: &'a [usize],
    k: usize,
    l2: f64,
}

impl Objective<'_> {
    fn logits(&self, w: &Matrix, b: &[f64]) -> Matrix {
        let mut z = self.x.matmul_t(w).expect("probe shapes fixed at construction");
        for i in 0..z.rows() {
            axpy(1.0, b, z.row_mut(i));
        }
        z
    }

    fn value(&self, w: &Matrix, b: &[f64]) -> f64 {
        let z = self.logits(w, b);
        let n = self.x.rows() as f64;
        let mut ce = 0.0;
        for (i, &y) in self.labels.iter().enumerate() {
            ce -= log_softmax(z.row(i), 1.0)[y];
        }
        ce / n + 0.5 * self.l2 * w.frobenius_sq()
    }

    fn value_grad(&self, w: &Matrix, b: &[f64]) -> (f64, Matrix, Vec<f64>) {
        let mut z = self.logits(w, b);
        let n = self.x.rows() as f64;
        let mut ce = 0.0;
        for (i, &y) in self.labels.iter().enumerate() {
            let row = z.row_mut(i);
            ce -= log_softmax(row, 1.0)[y];
            softmax_in_place(row, 1.0);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n);
        }
        let mut gw = w.scale(self.l2);
        let mut gb = vec![0.0; self.k];
        for i in 0..self.x.rows() {
            let xi = self.x.row(i);
            for (c, &g) in z.row(i).iter().enumerate() {
                axpy(g, xi, gw.row_mut(c));
                gb[c] += g;
            }
        }
        (ce / n + 0.5 * self.l2 * w.frobenius_sq(), gw, gb)
    }
}

fn grad_norm(gw: &Matrix, gb: &[f64]) -> f64 {
    (gw.frobenius_sq() + dot(gb, gb)).sqrt()
}

pub(crate) fn infer_classes(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn check_inputs(features: &Matrix, labels: &[usize]) -> Result<()> {
    features.validate_features()?;
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Fits a probe on `(features, labels)`; the number of classes is
/// `max(label) + 1`. The starting point is drawn from `rng`.
pub fn fit_probe(
    features: &Matrix,
    labels: &[usize],
    config: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeResult> {
    fit_probe_k(features, labels, infer_classes(labels).max(2), config, rng)
}

/// [`fit_probe`] with an explicit class count.
pub fn fit_probe_k(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    config: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeResult> {
    config.validate()?;
    check_inputs(features, labels)?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::Data(format!("label {bad} out of range for {n_classes} classes")));
    }
    let d = features.cols();
    let k = n_classes;
    let scaler = config.standardize.then(|| Standardizer::fit(features));
    let design = match &scaler {
        Some(s) => s.apply(features),
        None => features.clone(),
    };
    let obj = Objective {
        x: &design,
        labels,
        k,
        l2: config.l2,
    };

    let init: Vec<f64> = (0..k * d)
        .map(|_| rng.uniform(-INIT_SCALE, INIT_SCALE))
        .collect();
    let mut w = Matrix::from_vec(k, d, init)?;
    let mut b = vec![0.0; k];

    let (mut f, mut gw, mut gb) = obj.value_grad(&w, &b);
    let mut gnorm = grad_norm(&gw, &gb);
    let mut iterations = 0;
    while gnorm > config.grad_tol && iterations < config.max_iters {
        let g2 = gnorm * gnorm;
        let mut t = ARMIJO_START;
        let mut accepted = None;
        while t >= MIN_STEP {
            let mut w_try = w.clone();
            axpy(-t, gw.as_slice(), w_try.as_mut_slice());
            let mut b_try = b.clone();
            axpy(-t, &gb, &mut b_try);
            let f_try = obj.value(&w_try, &b_try);
            if f_try <= f - ARMIJO_C * t * g2 {
                accepted = Some((w_try, b_try));
                break;
            }
            t *= ARMIJO_SHRINK;
        }
        iterations += 1;
        let Some((w_new, b_new)) = accepted else {
            // No decrease representable at this precision.
            break;
        };
        w = w_new;
        b = b_new;
        (f, gw, gb) = obj.value_grad(&w, &b);
        gnorm = grad_norm(&gw, &gb);
    }
    if !f.is_finite() {
        return Err(Error::Data("probe objective became non-finite".into()));
    }

    // Fold standardization into the returned classifier.
    if let Some(s) = &scaler {
        for c in 0..k {
            let row = w.row_mut(c);
            let mut shift = 0.0;
            for j in 0..d {
                row[j] /= s.std[j];
                shift += row[j] * s.mean[j];
            }
            b[c] -= shift;
        }
    }
    let mut result = ProbeResult {
        weights: w,
        bias: b,
        cost: f,
        train_accuracy: 0.0,
        eval_accuracy: None,
        converged: gnorm <= config.grad_tol,
        iterations,
        grad_norm: gnorm,
    };
    result.train_accuracy = result.accuracy(features, labels)?;
    Ok(result)
}

/// Fits on a training split and scores a held-out split.
pub fn fit_probe_eval(
    train_x: &Matrix,
    train_y: &[usize],
    eval_x: &Matrix,
    eval_y: &[usize],
    config: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeResult> {
    let k = infer_classes(train_y).max(infer_classes(eval_y)).max(2);
    let mut r = fit_probe_k(train_x, train_y, k, config, rng)?;
    check_inputs(eval_x, eval_y)?;
    r.eval_accuracy = Some(r.accuracy(eval_x, eval_y)?);
    Ok(r)
}

/// The achieved regularized probe cost only. The starting point comes from
/// a fixed internal seed, so the result is a pure function of its inputs.
pub fn optimal_cost(features: &Matrix, labels: &[usize], config: &ProbeConfig) -> Result<f64> {
    Ok(fit_probe(features, labels, config, &mut Rng::new(0))?.cost)
}

pub(crate) fn optimal_cost_k(
    features: &Matrix,
    labels: &[usize],
    k: usize,
    config: &ProbeConfig,
) -> Result<f64> {
    Ok(fit_probe_k(features, labels, k, config, &mut Rng::new(0))?.cost)
}

/// Mean cross-entropy of a fixed logit matrix, without any penalty.
pub fn expected_loss(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    Ok(crate::nn::cross_entropy_loss(logits, labels)?.0)
}
