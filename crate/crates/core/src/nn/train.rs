use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layer::{LayerGrad, Parameterized};
use crate::nn::loss::{ce_kl_distill_loss, cross_entropy_loss, kl_distill_loss};
use crate::nn::network::Network;
use crate::nn::optim::{lr_at, sgd_step, MomentumState, TrainConfig};
use crate::rng::Rng;

/// Objective for single-head training. Teacher logits are precomputed for
/// every training row and stay fixed.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    CrossEntropy,
    Kl { teacher_logits: &'a Matrix, tau: f64 },
    CeKl { teacher_logits: &'a Matrix, alpha: f64, tau: f64 },
}

/// Epoch driver shared by every training procedure.
///
/// Each epoch draws a fresh permutation of `0..n_rows` from the shuffle
/// stream of `config.seed`, cuts it into consecutive batches (the last one
/// may be short) and applies one [`sgd_step`] per batch. `batch_grad`
/// returns the mean loss over the batch and its gradient; `after_epoch` runs
/// once per completed epoch. Returns the size-weighted mean batch loss of
/// each epoch.
pub fn run_sgd<M, G, A>(
    model: &mut M,
    n_rows: usize,
    config: &TrainConfig,
    mut batch_grad: G,
    mut after_epoch: A,
) -> Result<Vec<f64>>
where
    M: Parameterized,
    G: FnMut(&M, &[usize]) -> Result<(f64, Vec<LayerGrad>)>,
    A: FnMut(usize, &M) -> Result<()>,
{
    config.validate()?;
    if n_rows == 0 {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let mut state = MomentumState::zeros_for(model);
    let mut shuffle = Rng::for_shuffle(config.seed);
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_at(config.schedule, config.lr, epoch, config.epochs);
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_grad(model, batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            sgd_step(model, &grads, &mut state, config, lr)?;
        }
        let mean = total / n_rows as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        history.push(mean);
        after_epoch(epoch, model)?;
    }
    Ok(history)
}

/// Loss and gradient of `net` on the rows `batch` of `(x, labels)`.
pub fn batch_loss_grad(
    net: &Network,
    x: &Matrix,
    labels: &[usize],
    loss: LossKind<'_>,
    batch: &[usize],
) -> Result<(f64, Vec<LayerGrad>)> {
    let xb = x.select_rows(batch);
    let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
    let trace = net.forward_trace(&xb)?;
    let (value, grad) = loss_on_logits(&trace.logits, &yb, loss, batch)?;
    Ok((value, net.backward(&trace, &grad)?))
}

fn loss_on_logits(
    logits: &Matrix,
    labels: &[usize],
    loss: LossKind<'_>,
    batch: &[usize],
) -> Result<(f64, Matrix)> {
    match loss {
        LossKind::CrossEntropy => cross_entropy_loss(logits, labels),
        LossKind::Kl { teacher_logits, tau } => {
            kl_distill_loss(&teacher_logits.select_rows(batch), logits, tau)
        }
        LossKind::CeKl {
            teacher_logits,
            alpha,
            tau,
        } => ce_kl_distill_loss(&teacher_logits.select_rows(batch), logits, labels, alpha, tau),
    }
}

/// Trains `net` in place and returns the per-epoch loss history.
pub fn train(
    net: &mut Network,
    x: &Matrix,
    labels: &[usize],
    loss: LossKind<'_>,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    train_with_callback(net, x, labels, loss, config, |_, _| Ok(()))
}

/// [`train`] with a hook after every epoch (snapshots, logging).
pub fn train_with_callback(
    net: &mut Network,
    x: &Matrix,
    labels: &[usize],
    loss: LossKind<'_>,
    config: &TrainConfig,
    after_epoch: impl FnMut(usize, &Network) -> Result<()>,
) -> Result<Vec<f64>> {
    if x.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    if x.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} columns, network expects {}",
            x.cols(),
            net.input_dim()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= net.n_classes()) {
        return Err(Error::Data(format!("label {bad} out of range")));
    }
    match loss {
        LossKind::Kl { teacher_logits, .. } | LossKind::CeKl { teacher_logits, .. }
            if teacher_logits.shape() != (x.rows(), net.n_classes()) =>
        {
            return Err(Error::Shape("teacher logits do not cover the training rows".into()));
        }
        _ => {}
    }
    run_sgd(
        net,
        x.rows(),
        config,
        |n, batch| batch_loss_grad(n, x, labels, loss, batch),
        after_epoch,
    )
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}
