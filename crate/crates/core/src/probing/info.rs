//! Comparing representations through their optimal probe costs.
//!
//! Concatenating two feature sets can only lower the optimal probe cost,
//! since the smaller problem is the larger one with some weights pinned to
//! zero. Whether it lowers it by more than a finite-sample margin decides
//! which representation holds linearly usable information the other lacks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::probing::solver::{infer_classes, optimal_cost_k, ProbeConfig, ProbeResult};

/// Margin used when none is configured.
pub const DEFAULT_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// The union beats `phi2` by more than the margin.
    ContainsNewInfo,
    /// The union matches `phi2` within the margin.
    ContainsAllInfo,
    /// The union matches both sides within the margin.
    Equivalent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoVerdict {
    pub relation: Relation,
    pub cost_phi1: f64,
    pub cost_phi2: f64,
    pub cost_union: f64,
    pub margin: f64,
}

/// Optimal costs of `phi1`, `phi2` and their column concatenation.
pub fn union_cost(
    phi1: &Matrix,
    phi2: &Matrix,
    labels: &[usize],
    config: &ProbeConfig,
) -> Result<(f64, f64, f64)> {
    if phi1.rows() != phi2.rows() {
        return Err(Error::Shape(format!(
            "representations have {} and {} rows",
            phi1.rows(),
            phi2.rows()
        )));
    }
    let k = infer_classes(labels).max(2);
    let c1 = optimal_cost_k(phi1, labels, k, config)?;
    let c2 = optimal_cost_k(phi2, labels, k, config)?;
    let cu = optimal_cost_k(&Matrix::hcat(&[phi1, phi2])?, labels, k, config)?;
    Ok((c1, c2, cu))
}

/// Margin rule on the three costs:
/// - new information iff `c_union < c2 − margin`
/// - all information iff `|c_union − c2| ≤ margin`
/// - equivalent iff additionally `|c_union − c1| ≤ margin`
pub fn verdict_from_costs(c1: f64, c2: f64, cu: f64, margin: f64) -> InfoVerdict {
    let relation = if cu < c2 - margin {
        Relation::ContainsNewInfo
    } else if (cu - c1).abs() <= margin && (cu - c2).abs() <= margin {
        Relation::Equivalent
    } else {
        Relation::ContainsAllInfo
    };
    InfoVerdict {
        relation,
        cost_phi1: c1,
        cost_phi2: c2,
        cost_union: cu,
        margin,
    }
}

pub fn classify_information(
    phi1: &Matrix,
    phi2: &Matrix,
    labels: &[usize],
    config: &ProbeConfig,
    margin: f64,
) -> Result<InfoVerdict> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Parameter(format!("margin must be nonnegative, got {margin}")));
    }
    let (c1, c2, cu) = union_cost(phi1, phi2, labels, config)?;
    Ok(verdict_from_costs(c1, c2, cu, margin))
}

/// Unregularized expected loss of the mixed predictor
/// `λ·f1(phi1) + (1 − λ)·f2(phi2)`.
pub fn mixture_cost(
    f1: &ProbeResult,
    f2: &ProbeResult,
    lambda: f64,
    phi1: &Matrix,
    phi2: &Matrix,
    labels: &[usize],
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if f1.weights.cols() != phi1.cols() || f2.weights.cols() != phi2.cols() {
        return Err(Error::Shape("probe weights do not match feature widths".into()));
    }
    if f1.n_classes() != f2.n_classes() {
        return Err(Error::Shape("probes disagree on the number of classes".into()));
    }
    let z1 = f1.logits(phi1)?;
    let z2 = f2.logits(phi2)?;
    let mut z = z1.scale(lambda);
    for (a, b) in z.as_mut_slice().iter_mut().zip(z2.as_slice()) {
        *a += (1.0 - lambda) * b;
    }
    Ok(crate::nn::cross_entropy_loss(&z, labels)?.0)
}
