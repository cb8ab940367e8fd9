use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::cosine::{cosine_backward, cosine_forward_batch, CosineHead, DEFAULT_GAIN};
use crate::nn::layer::{
    layer_block, stack_backward, stack_forward, Activation, DenseLayer, LayerGrad, ParamBlock,
    Parameterized,
};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Linear,
    /// The last layer's weights hold the class directions and its bias the
    /// per-class gains.
    Cosine,
}

/// Feed-forward stack of dense layers. The last layer is the classifier
/// head; everything before it is the trunk whose output is the
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
    head_kind: HeadKind,
}

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of trunk layer `l`.
    pub acts: Vec<Matrix>,
    pub logits: Matrix,
}

impl Trace {
    pub fn penultimate(&self) -> &Matrix {
        self.acts.last().expect("trace always holds the input")
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>, head_kind: HeadKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].n_out(),
                    i + 1,
                    pair[1].n_in()
                )));
            }
        }
        let net = Self { layers, head_kind };
        if head_kind == HeadKind::Cosine {
            // Validates direction norms and gains.
            net.cosine_head()?;
        }
        Ok(net)
    }

    /// Glorot-initialized MLP. `sizes = [n_in, h_1, ..., h_k, n_classes]`;
    /// hidden layers use ReLU, the head is linear (or cosine with unit gains
    /// scaled by [`DEFAULT_GAIN`]).
    pub fn mlp(sizes: &[usize], head_kind: HeadKind, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for (i, w) in sizes.windows(2).enumerate() {
            let act = if i + 1 < n {
                Activation::Relu
            } else {
                Activation::Linear
            };
            layers.push(DenseLayer::glorot(w[0], w[1], act, rng));
        }
        if head_kind == HeadKind::Cosine {
            let head = layers.last_mut().unwrap();
            head.bias = vec![DEFAULT_GAIN; head.n_out()];
        }
        Self::new(layers, head_kind)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn head(&self) -> &DenseLayer {
        self.layers.last().unwrap()
    }

    pub fn head_mut(&mut self) -> &mut DenseLayer {
        self.layers.last_mut().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn feature_dim(&self) -> usize {
        self.head().n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.head().n_out()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    pub fn cosine_head(&self) -> Result<CosineHead> {
        let h = self.head();
        CosineHead::new(h.weights.clone(), h.bias.clone())
    }

    /// Replaces the head with `head`, keeping the trunk.
    pub fn with_head(&self, head: DenseLayer, head_kind: HeadKind) -> Result<Network> {
        let mut layers = self.trunk().to_vec();
        layers.push(head);
        Network::new(layers, head_kind)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Penultimate activation only.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in self.trunk() {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn head_logits(&self, features: &Matrix) -> Result<Matrix> {
        let head = self.head();
        match self.head_kind {
            HeadKind::Linear => head.forward(features),
            HeadKind::Cosine => cosine_forward_batch(features, &head.weights, &head.bias),
        }
    }

    /// Returns `(logits, penultimate)`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let feats = self.features(x)?;
        let logits = self.head_logits(&feats)?;
        Ok((logits, feats))
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<Trace> {
        self.check_input(x)?;
        let acts = stack_forward(self.trunk(), x)?;
        let logits = self.head_logits(acts.last().unwrap())?;
        Ok(Trace { acts, logits })
    }

    /// Parameter gradients (trunk layers then head) for a gradient with
    /// respect to the logits.
    pub fn backward(&self, trace: &Trace, grad_logits: &Matrix) -> Result<Vec<LayerGrad>> {
        let (head_grad, grad_feat) = self.head_backward(trace.penultimate(), grad_logits)?;
        let mut grads = self.trunk_backward(trace, grad_feat);
        grads.push(head_grad);
        Ok(grads)
    }

    /// Head gradient and gradient with respect to the penultimate features.
    pub fn head_backward(&self, feats: &Matrix, grad_logits: &Matrix) -> Result<(LayerGrad, Matrix)> {
        let head = self.head();
        match self.head_kind {
            HeadKind::Linear => {
                let out = match head.activation {
                    Activation::Relu => head.forward(feats)?,
                    Activation::Linear => Matrix::zeros(0, 0),
                };
                let (g, gi) = head.backward(feats, &out, grad_logits.clone(), true);
                Ok((g, gi.unwrap()))
            }
            HeadKind::Cosine => cosine_backward(feats, &head.weights, &head.bias, grad_logits),
        }
    }

    /// Trunk gradients for a gradient with respect to the penultimate
    /// features.
    pub fn trunk_backward(&self, trace: &Trace, grad_feat: Matrix) -> Vec<LayerGrad> {
        stack_backward(self.trunk(), &trace.acts, grad_feat, false).0
    }

    /// Exact byte image of all parameters, used for determinism checks.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.layers {
            for v in l.weights.as_slice().iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

impl Parameterized for Network {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        self.layers.iter_mut().map(layer_block).collect()
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.n_out(), l.n_in())).collect()
    }
}
