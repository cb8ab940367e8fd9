use crate::error::Result;
use crate::matrix::Matrix;
use crate::probing::{fit_probe_eval, ProbeConfig, ProbeResult};
use crate::rng::Rng;
use crate::tasks::Dataset;

/// Accuracy on `eval` of a probe fitted on `train`; `features` maps raw
/// inputs to the representation under test.
pub fn probe_accuracy(
    features: &dyn Fn(&Matrix) -> Result<Matrix>,
    train: &Dataset,
    eval: &Dataset,
    config: &ProbeConfig,
) -> Result<f64> {
    Ok(probe_fit(features, train, eval, config)?.eval_accuracy.unwrap_or(0.0))
}

/// As [`probe_accuracy`], keeping the whole fit (cost included).
pub fn probe_fit(
    features: &dyn Fn(&Matrix) -> Result<Matrix>,
    train: &Dataset,
    eval: &Dataset,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    fit_probe_eval(
        &features(&train.x)?,
        &train.y,
        &features(&eval.x)?,
        &eval.y,
        config,
        &mut Rng::new(0),
    )
}

/// Seeded split of `ds` into two halves (the first gets the extra row).
pub fn split_halves(ds: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    Rng::for_shuffle(seed).shuffle(&mut idx);
    let cut = ds.len().div_ceil(2);
    (ds.subset(&idx[..cut]), ds.subset(&idx[cut..]))
}

/// Seeded split holding out `fraction` of the rows.
pub fn split_holdout(ds: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    Rng::for_shuffle(seed).shuffle(&mut idx);
    let n_out = ((ds.len() as f64) * fraction).round() as usize;
    let cut = ds.len() - n_out.min(ds.len());
    (ds.subset(&idx[..cut]), ds.subset(&idx[cut..]))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (ddof = 1); zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
