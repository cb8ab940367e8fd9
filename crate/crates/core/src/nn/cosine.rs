//! Cosine classifier head: `h_i = g_i · ⟨u_i, z⟩ / (‖u_i‖ ‖z‖)`.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::nn::layer::LayerGrad;
use crate::rng::Rng;

/// Default per-class gain for freshly initialized heads.
pub const DEFAULT_GAIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CosineHead {
    /// One direction per class, `n_classes × n_features`.
    pub directions: Matrix,
    pub gains: Vec<f64>,
}

impl CosineHead {
    pub fn new(directions: Matrix, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != directions.rows() {
            return Err(Error::Shape(format!(
                "{} gains for {} directions",
                gains.len(),
                directions.rows()
            )));
        }
        if let Some(i) = directions.iter_rows().position(|u| norm(u) <= 0.0) {
            return Err(Error::NumericalDomain(format!("direction {i} has zero norm")));
        }
        if gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::Parameter("cosine gains must be finite".into()));
        }
        Ok(Self { directions, gains })
    }

    pub fn glorot(n_features: usize, n_classes: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (n_features + n_classes) as f64).sqrt();
        let data = (0..n_features * n_classes)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        Self {
            directions: Matrix::from_vec(n_classes, n_features, data).expect("sized above"),
            gains: vec![DEFAULT_GAIN; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.directions.rows()
    }

    pub fn n_features(&self) -> usize {
        self.directions.cols()
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        cosine_head_forward(z, &self.directions, &self.gains)
    }

    pub fn forward_batch(&self, z: &Matrix) -> Result<Matrix> {
        cosine_forward_batch(z, &self.directions, &self.gains)
    }
}

/// Logits of a cosine head for one feature vector.
pub fn cosine_head_forward(z: &[f64], directions: &Matrix, gains: &[f64]) -> Result<Vec<f64>> {
    if z.len() != directions.cols() {
        return Err(Error::Shape(format!(
            "feature width {} does not match head width {}",
            z.len(),
            directions.cols()
        )));
    }
    let zn = norm(z);
    if zn == 0.0 || !zn.is_finite() {
        return Err(Error::NumericalDomain(
            "cosine head input has zero or non-finite norm".into(),
        ));
    }
    directions
        .iter_rows()
        .zip(gains)
        .enumerate()
        .map(|(i, (u, &g))| {
            let un = norm(u);
            if un == 0.0 {
                return Err(Error::NumericalDomain(format!("direction {i} has zero norm")));
            }
            Ok(g * (dot(u, z) / (un * zn)))
        })
        .collect()
}

pub(crate) fn cosine_forward_batch(z: &Matrix, directions: &Matrix, gains: &[f64]) -> Result<Matrix> {
    let mut out = Matrix::zeros(z.rows(), directions.rows());
    for i in 0..z.rows() {
        let h = cosine_head_forward(z.row(i), directions, gains)?;
        out.row_mut(i).copy_from_slice(&h);
    }
    Ok(out)
}

/// Gradients of a batch of cosine-head logits. Returns the parameter
/// gradient (directions in `weights`, gains in `bias`) and the gradient
/// with respect to the features.
pub(crate) fn cosine_backward(
    z: &Matrix,
    directions: &Matrix,
    gains: &[f64],
    grad_logits: &Matrix,
) -> Result<(LayerGrad, Matrix)> {
    let k = directions.rows();
    let d = directions.cols();
    let unorms: Vec<f64> = directions.iter_rows().map(norm).collect();
    let mut grad = LayerGrad::zeros(k, d);
    let mut grad_z = Matrix::zeros(z.rows(), d);
    for r in 0..z.rows() {
        let zr = z.row(r);
        let zn = norm(zr);
        if zn == 0.0 {
            return Err(Error::NumericalDomain(format!(
                "cosine head input row {r} has zero norm"
            )));
        }
        for i in 0..k {
            let gh = grad_logits[(r, i)];
            if gh == 0.0 {
                continue;
            }
            let u = directions.row(i);
            let un = unorms[i];
            let c = dot(u, zr) / (un * zn);
            grad.bias[i] += gh * c;
            let gi = gains[i] * gh;
            // d cos / d u = z/(|u||z|) - c u/|u|^2 ; d cos / d z symmetric
            let gu = grad.weights.row_mut(i);
            for j in 0..d {
                gu[j] += gi * (zr[j] / (un * zn) - c * u[j] / (un * un));
            }
            let gz = grad_z.row_mut(r);
            for j in 0..d {
                gz[j] += gi * (u[j] / (un * zn) - c * zr[j] / (zn * zn));
            }
        }
    }
    Ok((grad, grad_z))
}
