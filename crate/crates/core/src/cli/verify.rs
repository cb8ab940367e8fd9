//! Property suites for the probing solver, run by `richrep verify` and by
//! the `verify` pipeline.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::probing::{fit_probe, mixture_cost, union_cost, ProbeConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub detail: String,
}

pub type UnionCostFn = fn(&Matrix, &Matrix, &[usize], &ProbeConfig) -> Result<(f64, f64, f64)>;

/// Swappable entry points, so a test can inject a faulty implementation
/// and watch the matching suite fail.
#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    pub union_cost: UnionCostFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { union_cost }
    }
}

pub const UNION_SLACK: f64 = 1e-3;
pub const MIXTURE_SPREAD: f64 = 2e-3;
pub const MIN_AGREEMENT: f64 = 0.99;
pub const ORACLE_TOL: f64 = 1e-3;
pub const RESTART_TOL: f64 = 1e-4;

fn suite_config() -> ProbeConfig {
    ProbeConfig {
        l2: 1e-2,
        max_iters: 5000,
        grad_tol: 1e-6,
        standardize: false,
    }
}

/// Labels uniform over `k`, each feature a noisy random linear readout of
/// the class plus Gaussian noise.
pub fn random_features(n: usize, d: usize, labels: &[usize], k: usize, rng: &mut Rng) -> Matrix {
    let means: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let mut x = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = means[y][j] + 1.5 * rng.normal();
        }
    }
    x
}

fn random_labels(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.below(k)).collect()
}

/// Adding columns never raises the optimal probe cost.
pub fn union_monotonicity(seed: u64, trials: usize, hooks: &Hooks) -> Result<PropertyResult> {
    let mut rng = Rng::new(seed);
    let cfg = suite_config();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let k = 2 + rng.below(3);
        let n = 80;
        let y = random_labels(n, k, &mut rng);
        let d1 = 1 + rng.below(5);
        let d2 = 1 + rng.below(5);
        let p1 = random_features(n, d1, &y, k, &mut rng);
        let p2 = random_features(n, d2, &y, k, &mut rng);
        let (c1, c2, cu) = (hooks.union_cost)(&p1, &p2, &y, &cfg)?;
        worst = worst.max(cu - c1.min(c2));
    }
    Ok(PropertyResult {
        name: "union-monotonicity",
        passed: worst <= UNION_SLACK,
        instances: trials,
        worst,
        detail: format!("max c_union - min(c1, c2) = {worst:.3e} (slack {UNION_SLACK:.0e})"),
    })
}

/// Probes fit on column-permuted copies of the same features define the
/// same predictor, so mixing them leaves the loss unchanged.
pub fn permutation_mixture(seed: u64, trials: usize) -> Result<PropertyResult> {
    let mut rng = Rng::new(seed);
    let cfg = suite_config();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (n, d, k) = (100, 4, 3);
        let y = random_labels(n, k, &mut rng);
        let p1 = random_features(n, d, &y, k, &mut rng);
        let mut perm: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut perm);
        let p2 = p1.select_cols(&perm);
        let f1 = fit_probe(&p1, &y, &cfg, &mut rng.split())?;
        let f2 = fit_probe(&p2, &y, &cfg, &mut rng.split())?;
        let costs = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&l| mixture_cost(&f1, &f2, l, &p1, &p2, &y))
            .collect::<Result<Vec<_>>>()?;
        let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max(hi - lo);
    }
    Ok(PropertyResult {
        name: "permutation-mixture",
        passed: worst <= MIXTURE_SPREAD,
        instances: trials,
        worst,
        detail: format!("max spread over lambda = {worst:.3e} (limit {MIXTURE_SPREAD:.0e})"),
    })
}

/// Two converged probes from different starting points classify held-out
/// rows the same way.
pub fn probe_uniqueness(seed: u64, trials: usize) -> Result<PropertyResult> {
    let mut rng = Rng::new(seed);
    let cfg = suite_config();
    let mut worst: f64 = 1.0;
    let mut unconverged = 0;
    for _ in 0..trials {
        let (n, d, k) = (150, 5, 3);
        let y = random_labels(2 * n, k, &mut rng);
        let x = random_features(2 * n, d, &y, k, &mut rng);
        let train: Vec<usize> = (0..n).collect();
        let held: Vec<usize> = (n..2 * n).collect();
        let xt = x.select_rows(&train);
        let xh = x.select_rows(&held);
        let a = fit_probe(&xt, &y[..n], &cfg, &mut rng.split())?;
        let b = fit_probe(&xt, &y[..n], &cfg, &mut rng.split())?;
        if !(a.converged && b.converged) {
            unconverged += 1;
            worst = 0.0;
            continue;
        }
        let pa = a.predict(&xh)?;
        let pb = b.predict(&xh)?;
        let agree = pa.iter().zip(&pb).filter(|(p, q)| p == q).count() as f64 / n as f64;
        worst = worst.min(agree);
    }
    Ok(PropertyResult {
        name: "probe-uniqueness",
        passed: unconverged == 0 && worst >= MIN_AGREEMENT,
        instances: trials,
        worst,
        detail: format!(
            "min held-out agreement = {worst:.4} (need {MIN_AGREEMENT}); unconverged pairs: {unconverged}"
        ),
    })
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Regularized two-class cost at slope `w` after minimizing over the
/// offset. With two classes the penalty on `(−w, w)` is `l2·w²` and the
/// logit gap is `2w·x + c`.
fn scalar_cost(x: &[f64], y: &[usize], l2: f64, w: f64) -> f64 {
    let n = x.len() as f64;
    // d/dc of the mean loss is increasing in c; bisect for its root.
    let slope = |c: f64| x.iter().zip(y).map(|(&xi, &yi)| sigmoid(2.0 * w * xi + c) - yi as f64).sum::<f64>();
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let z = 2.0 * w * xi + c;
            if yi == 1 {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    loss / n + l2 * w * w
}

/// Grid search over `w ∈ [−10, 10]` in steps of `1e−3`.
pub fn scalar_grid_oracle(x: &[f64], y: &[usize], l2: f64) -> f64 {
    (0..=20_000)
        .map(|i| scalar_cost(x, y, l2, -10.0 + i as f64 * 1e-3))
        .fold(f64::INFINITY, f64::min)
}

/// The solver's cost on one-feature two-class problems matches a
/// brute-force grid.
pub fn scalar_oracle(seed: u64, trials: usize) -> Result<PropertyResult> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = 20;
        let l2 = 0.05 + 0.2 * rng.next_f64();
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<usize> = x.iter().map(|&v| usize::from(v + 0.8 * rng.normal() > 0.0)).collect();
        let cfg = ProbeConfig {
            l2,
            ..suite_config()
        };
        let feats = Matrix::from_vec(n, 1, x.clone())?;
        let probe = crate::probing::fit_probe_k(&feats, &y, 2, &cfg, &mut rng.split())?;
        worst = worst.max((probe.cost - scalar_grid_oracle(&x, &y, l2)).abs());
    }
    Ok(PropertyResult {
        name: "scalar-oracle",
        passed: worst <= ORACLE_TOL,
        instances: trials,
        worst,
        detail: format!("max |solver - grid| = {worst:.3e} (limit {ORACLE_TOL:.0e})"),
    })
}

/// Restarts from random points reach the same cost.
pub fn restart_agreement(seed: u64, trials: usize) -> Result<PropertyResult> {
    let mut rng = Rng::new(seed);
    let cfg = suite_config();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (n, d, k) = (100, 3, 3);
        let y = random_labels(n, k, &mut rng);
        let x = random_features(n, d, &y, k, &mut rng);
        let costs = (0..10)
            .map(|_| Ok(fit_probe(&x, &y, &cfg, &mut rng.split())?.cost))
            .collect::<Result<Vec<_>>>()?;
        let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max(hi - lo);
    }
    Ok(PropertyResult {
        name: "restart-agreement",
        passed: worst <= RESTART_TOL,
        instances: trials,
        worst,
        detail: format!("max cost spread over 10 restarts = {worst:.3e} (limit {RESTART_TOL:.0e})"),
    })
}

/// Every suite at its declared size.
pub fn run_suites(seed: u64, hooks: &Hooks) -> Result<Vec<PropertyResult>> {
    Ok(vec![
        union_monotonicity(seed, 50, hooks)?,
        permutation_mixture(seed.wrapping_add(1), 20)?,
        probe_uniqueness(seed.wrapping_add(2), 20)?,
        scalar_oracle(seed.wrapping_add(3), 10)?,
        restart_agreement(seed.wrapping_add(4), 5)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_four_points() {
        // {(-1, 0), (-1, 0), (1, 1), (1, 1)}: the optimal offset is 0, so
        // the cost is softplus(-2w) + l2·w² minimized over w.
        let x = [-1.0, -1.0, 1.0, 1.0];
        let y = [0, 0, 1, 1];
        let direct = (0..=20_000)
            .map(|i| {
                let w = -10.0 + i as f64 * 1e-3;
                softplus(-2.0 * w) + 0.1 * w * w
            })
            .fold(f64::INFINITY, f64::min);
        assert!((scalar_grid_oracle(&x, &y, 0.1) - direct).abs() < 1e-9);
        let feats = Matrix::from_vec(4, 1, x.to_vec()).unwrap();
        let cfg = ProbeConfig { l2: 0.1, ..suite_config() };
        let p = fit_probe(&feats, &y, &cfg, &mut Rng::new(0)).unwrap();
        assert!((p.cost - direct).abs() < 1e-3);
    }

    #[test]
    fn flipped_union_fails_its_suite() {
        fn flipped(a: &Matrix, b: &Matrix, y: &[usize], c: &ProbeConfig) -> Result<(f64, f64, f64)> {
            let (c1, c2, cu) = union_cost(a, b, y, c)?;
            Ok((c1, c2, -cu + 2.0 * c1.max(c2) + 0.1))
        }
        let r = union_monotonicity(0, 3, &Hooks { union_cost: flipped }).unwrap();
        assert!(!r.passed);
        assert!(union_monotonicity(0, 3, &Hooks::default()).unwrap().passed);
    }
}
