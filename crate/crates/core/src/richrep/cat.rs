use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layer::{layer_block, stack_backward, stack_forward};
use crate::nn::{
    cross_entropy_loss, run_sgd, Activation, DenseLayer, LayerGrad, ParamBlock, Parameterized,
    TrainConfig,
};
use crate::richrep::bank::{Provenance, RepresentationBank};
use crate::richrep::episodes::Arch;
use crate::rng::Rng;
use crate::tasks::Dataset;

/// Parallel trunks ("legs") whose outputs are concatenated and fed to one
/// linear head. Used both for the jointly trained n× baseline and for
/// naive fine-tuning of a CAT-n representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CatNetwork {
    legs: Vec<Vec<DenseLayer>>,
    head: DenseLayer,
}

impl CatNetwork {
    pub fn new(legs: Vec<Vec<DenseLayer>>, head: DenseLayer) -> Result<Self> {
        if legs.is_empty() || legs.iter().any(Vec::is_empty) {
            return Err(Error::Shape("every leg needs at least one layer".into()));
        }
        let n_in = legs[0][0].n_in();
        let mut width = 0;
        for (i, leg) in legs.iter().enumerate() {
            if leg[0].n_in() != n_in {
                return Err(Error::Shape(format!("leg {i} has a different input width")));
            }
            if leg.windows(2).any(|w| w[0].n_out() != w[1].n_in()) {
                return Err(Error::Shape(format!("leg {i} has mismatched layers")));
            }
            width += leg.last().unwrap().n_out();
        }
        if head.n_in() != width {
            return Err(Error::Shape(format!(
                "head expects {} features, legs produce {width}",
                head.n_in()
            )));
        }
        Ok(Self { legs, head })
    }

    /// Trunks of `bank` under a fresh Glorot head for `n_classes`.
    pub fn from_bank(bank: &RepresentationBank, n_classes: usize, rng: &mut Rng) -> Result<Self> {
        let legs = bank.members().iter().map(|m| m.trunk().to_vec()).collect();
        let head = DenseLayer::glorot(bank.total_dim(), n_classes, Activation::Linear, rng);
        Self::new(legs, head)
    }

    /// `n_legs` fresh copies of `arch` and a head, all drawn in order from
    /// one init stream.
    pub fn fresh(arch: &Arch, n_in: usize, n_classes: usize, n_legs: usize, seed: u64) -> Result<Self> {
        if n_legs == 0 || arch.hidden.is_empty() {
            return Err(Error::Parameter("need at least one leg with a hidden layer".into()));
        }
        let mut rng = Rng::for_init(seed);
        let mut legs = Vec::with_capacity(n_legs);
        for _ in 0..n_legs {
            let mut leg = Vec::new();
            let mut prev = n_in;
            for &h in &arch.hidden {
                leg.push(DenseLayer::glorot(prev, h, Activation::Relu, &mut rng));
                prev = h;
            }
            legs.push(leg);
        }
        let width = arch.feature_dim(n_in) * n_legs;
        let head = DenseLayer::glorot(width, n_classes, Activation::Linear, &mut rng);
        Self::new(legs, head)
    }

    pub fn legs(&self) -> &[Vec<DenseLayer>] {
        &self.legs
    }

    pub fn head(&self) -> &DenseLayer {
        &self.head
    }

    pub fn leg_dims(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.last().unwrap().n_out()).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.legs[0][0].n_in()
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        let blocks = self
            .legs
            .iter()
            .map(|leg| Ok(stack_forward(leg, x)?.pop().unwrap()))
            .collect::<Result<Vec<_>>>()?;
        Matrix::hcat(&blocks.iter().collect::<Vec<_>>())
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.head.forward(&self.features(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }

    fn loss_grad(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<LayerGrad>)> {
        let traces = self
            .legs
            .iter()
            .map(|leg| stack_forward(leg, x))
            .collect::<Result<Vec<_>>>()?;
        let outs: Vec<&Matrix> = traces.iter().map(|t| t.last().unwrap()).collect();
        let feats = Matrix::hcat(&outs)?;
        let logits = self.head.forward(&feats)?;
        let (loss, g) = cross_entropy_loss(&logits, labels)?;
        let (head_grad, grad_feat) = self.head.backward(&feats, &logits, g, true);
        let grad_feat = grad_feat.unwrap();
        let mut grads = Vec::new();
        let mut at = 0;
        for (leg, acts) in self.legs.iter().zip(&traces) {
            let w = leg.last().unwrap().n_out();
            let (lg, _) = stack_backward(leg, acts, grad_feat.col_block(at, w), false);
            grads.extend(lg);
            at += w;
        }
        grads.push(head_grad);
        Ok((loss, grads))
    }

    /// Cross-entropy training of legs and head together.
    pub fn train(&mut self, data: &Dataset, config: &TrainConfig) -> Result<Vec<f64>> {
        if data.n_features() != self.input_dim() {
            return Err(Error::Shape("data width does not match the legs".into()));
        }
        if data.n_classes > self.head.n_out() {
            return Err(Error::Data("labels exceed the head's classes".into()));
        }
        run_sgd(
            self,
            data.len(),
            config,
            |m, batch| {
                let xb = data.x.select_rows(batch);
                let yb: Vec<usize> = batch.iter().map(|&i| data.y[i]).collect();
                m.loss_grad(&xb, &yb)
            },
            |_, _| Ok(()),
        )
    }

    /// Splits into a bank; leg `i` keeps the head columns that read its
    /// block, together with the full head bias.
    pub fn to_bank(&self, provenance: Provenance, seed: u64) -> Result<RepresentationBank> {
        let mut members = Vec::with_capacity(self.legs.len());
        let mut at = 0;
        for leg in &self.legs {
            let w = leg.last().unwrap().n_out();
            let head = DenseLayer::new(
                self.head.weights.col_block(at, w),
                self.head.bias.clone(),
                Activation::Linear,
            )?;
            let mut layers = leg.clone();
            layers.push(head);
            members.push(crate::nn::Network::new(layers, crate::nn::HeadKind::Linear)?);
            at += w;
        }
        let seeds = vec![seed; members.len()];
        RepresentationBank::new(members, seeds, provenance)
    }
}

impl Parameterized for CatNetwork {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        let mut blocks: Vec<ParamBlock<'_>> =
            self.legs.iter_mut().flatten().map(layer_block).collect();
        blocks.push(layer_block(&mut self.head));
        blocks
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.legs
            .iter()
            .flatten()
            .chain(std::iter::once(&self.head))
            .map(|l| (l.n_out(), l.n_in()))
            .collect()
    }
}

/// The n× baseline: one network of `n_legs` legs trained as a whole from a
/// single seed.
pub fn joint_training(
    data: &Dataset,
    arch: &Arch,
    n_legs: usize,
    config: &TrainConfig,
) -> Result<CatNetwork> {
    let mut net = CatNetwork::fresh(arch, data.n_features(), data.n_classes, n_legs, config.seed)?;
    net.train(data, config).map_err(|e| Error::Episode {
        seed: config.seed,
        source: Box::new(e),
    })?;
    Ok(net)
}

/// Fine-tunes every trunk of `bank` and a fresh joint head in a single
/// episode.
pub fn naive_finetune(
    bank: &RepresentationBank,
    target: &Dataset,
    config: &TrainConfig,
) -> Result<CatNetwork> {
    let mut net = CatNetwork::from_bank(bank, target.n_classes, &mut Rng::for_init(config.seed))?;
    net.train(target, config)?;
    Ok(net)
}
