use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `n_out × n_in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Gradient (or momentum buffer) with the shape of one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            weights: Matrix::zeros(n_out, n_in),
            bias: vec![0.0; n_out],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &LayerGrad) {
        axpy(1.0, other.weights.as_slice(), self.weights.as_mut_slice());
        axpy(1.0, &other.bias, &mut self.bias);
    }
}

/// Mutable view of one parameter block. `weights` are subject to weight
/// decay, `bias` (biases, cosine gains) is not.
pub struct ParamBlock<'a> {
    pub weights: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Anything trained by [`sgd_step`](super::optim::sgd_step): exposes its
/// parameter blocks in a fixed order matching the gradients it produces.
pub trait Parameterized {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>>;

    /// `(n_out, n_in)` of each block, same order as `param_blocks`.
    fn param_shapes(&self) -> Vec<(usize, usize)>;
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights drawn in row-major order, zero bias.
    pub fn glorot(n_in: usize, n_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_in * n_out)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        Self {
            weights: Matrix::from_vec(n_out, n_in, data).expect("sized above"),
            bias: vec![0.0; n_out],
            activation,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul_t(&self.weights)?;
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
                if self.activation == Activation::Relu && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// Backward pass given the layer input and output. `grad_out` is the
    /// gradient with respect to the post-activation output and is consumed
    /// as scratch. Returns the parameter gradient and, when asked, the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        input: &Matrix,
        output: &Matrix,
        mut grad_out: Matrix,
        want_input_grad: bool,
    ) -> (LayerGrad, Option<Matrix>) {
        if self.activation == Activation::Relu {
            for (g, &o) in grad_out.as_mut_slice().iter_mut().zip(output.as_slice()) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let mut grad = LayerGrad::zeros(self.n_out(), self.n_in());
        let mut grad_in = want_input_grad.then(|| Matrix::zeros(input.rows(), self.n_in()));
        for i in 0..input.rows() {
            let x = input.row(i);
            let g = grad_out.row(i);
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                axpy(go, x, grad.weights.row_mut(o));
                grad.bias[o] += go;
                if let Some(gi) = grad_in.as_mut() {
                    axpy(go, self.weights.row(o), gi.row_mut(i));
                }
            }
        }
        (grad, grad_in)
    }
}

/// Forward through a stack, keeping every activation: `acts[0]` is the
/// input, `acts[l + 1]` the output of layer `l`.
pub fn stack_forward(layers: &[DenseLayer], x: &Matrix) -> Result<Vec<Matrix>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for (l, layer) in layers.iter().enumerate() {
        let out = layer.forward(&acts[l]).map_err(|e| match e {
            Error::Shape(msg) => Error::Shape(format!("layer {l}: {msg}")),
            other => other,
        })?;
        acts.push(out);
    }
    Ok(acts)
}

/// Backward through a stack given the activations from [`stack_forward`].
pub fn stack_backward(
    layers: &[DenseLayer],
    acts: &[Matrix],
    grad_out: Matrix,
    want_input_grad: bool,
) -> (Vec<LayerGrad>, Option<Matrix>) {
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = Some(grad_out);
    for l in (0..layers.len()).rev() {
        let need_in = l > 0 || want_input_grad;
        let (lg, gi) = layers[l].backward(&acts[l], &acts[l + 1], g.take().unwrap(), need_in);
        grads.push(lg);
        g = gi;
    }
    grads.reverse();
    (grads, g)
}

pub(crate) fn layer_block(layer: &mut DenseLayer) -> ParamBlock<'_> {
    ParamBlock {
        weights: layer.weights.as_mut_slice(),
        bias: &mut layer.bias,
    }
}

impl Parameterized for Vec<DenseLayer> {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        self.iter_mut().map(layer_block).collect()
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.iter().map(|l| (l.n_out(), l.n_in())).collect()
    }
}

/// Dot product of a row with each weight row, used by tests as a reference.
#[cfg(test)]
pub(crate) fn naive_affine(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    (0..layer.n_out())
        .map(|o| crate::matrix::dot(layer.weights.row(o), x) + layer.bias[o])
        .collect()
}
