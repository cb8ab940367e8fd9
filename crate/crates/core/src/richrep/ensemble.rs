use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::softmax_rows;
use crate::probing::{fit_probe_eval, ProbeConfig, ProbeResult};
use crate::richrep::bank::RepresentationBank;
use crate::rng::Rng;
use crate::tasks::Dataset;

/// Mean over members of `softmax(probe_i(Φ_i(x)))`.
pub fn subset_ensemble_predict(
    bank: &RepresentationBank,
    probes: &[ProbeResult],
    x: &Matrix,
) -> Result<Matrix> {
    if probes.len() != bank.len() {
        return Err(Error::Parameter(format!(
            "{} probes for {} extractors",
            probes.len(),
            bank.len()
        )));
    }
    let logits = bank
        .members()
        .iter()
        .zip(probes)
        .map(|(m, p)| p.logits(&m.features(x)?))
        .collect::<Result<Vec<_>>>()?;
    mean_softmax(&logits)
}

/// Row-wise mean of the softmax of each logit matrix.
pub fn mean_softmax(logits: &[Matrix]) -> Result<Matrix> {
    let first = logits
        .first()
        .ok_or_else(|| Error::Parameter("nothing to average".into()))?;
    let n = logits.len() as f64;
    let mut out = Matrix::zeros(first.rows(), first.cols());
    for l in logits {
        if l.shape() != first.shape() {
            return Err(Error::Shape("ensemble members disagree on output shape".into()));
        }
        let p = softmax_rows(l, 1.0)?;
        for (o, v) in out.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *o += v / n;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegGap {
    pub accuracies: Vec<f64>,
    pub gap: f64,
}

/// Probes each leg on its own features (fit on `train`, scored on `eval`).
pub fn leg_probe_gap(
    bank: &RepresentationBank,
    train: &Dataset,
    eval: &Dataset,
    config: &ProbeConfig,
) -> Result<LegGap> {
    let mut accuracies = Vec::with_capacity(bank.len());
    for m in bank.members() {
        let p = fit_probe_eval(
            &m.features(&train.x)?,
            &train.y,
            &m.features(&eval.x)?,
            &eval.y,
            config,
            &mut Rng::new(0),
        )?;
        accuracies.push(p.eval_accuracy.unwrap_or(0.0));
    }
    let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LegGap {
        accuracies,
        gap: max - min,
    })
}
