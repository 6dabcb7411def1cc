//! A small feedforward binary classifier: an affine+ReLU backbone producing
//! features `z`, a pluggable [`Normalizer`], and a linear head producing two
//! logits. Gradients are computed by hand.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::data::Attribute;
use crate::error::{Error, Result};
use crate::norm::{init_fin, BatchNormState, Mode, NormCache, NormGrads, NormKind, Normalizer};
use crate::rng::{self, Stream};

pub const CLASSES: usize = 2;

/// `x W + b` with `W` stored as `[inputs × outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`, zero bias.
    fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub backbone: Vec<Affine>,
    pub norm: Normalizer,
    pub head: Affine,
}

/// Everything [`MlpModel::backward`] needs from a forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    /// Input of every backbone layer.
    layer_inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden backbone layers (all but the last).
    hidden: Vec<Array2<f64>>,
    norm: NormCache,
    head_input: Array2<f64>,
}

impl ForwardCache {
    pub fn norm(&self) -> &NormCache {
        &self.norm
    }
}

/// Parameter gradients, shape-congruent with [`MlpModel`], plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub backbone: Vec<Affine>,
    pub norm: NormGrads,
    pub head: Affine,
    pub input: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Weight,
    Bias,
    Normalizer,
}

/// A named, flat view of one parameter tensor.
#[derive(Debug)]
pub struct ParamBlock<'a> {
    pub name: String,
    pub kind: BlockKind,
    pub values: &'a mut [f64],
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Builds a model whose backbone maps `layer_dims[0]` inputs through each
/// listed width; the last width is the feature dimension seen by the
/// normalizer and head. Deterministic in `seed`.
pub fn init_mlp(
    layer_dims: &[usize],
    norm_kind: NormKind,
    group_count: usize,
    momentum: f64,
    seed: u64,
) -> Result<MlpModel> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(
            "layer_dims needs an input width and at least one backbone layer".into(),
        ));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    let mut weights_rng = rng::stream(seed, Stream::Weights);
    let backbone = layer_dims
        .windows(2)
        .map(|w| Affine::init(w[0], w[1], &mut weights_rng))
        .collect();
    let d = *layer_dims.last().expect("checked length");
    let head = Affine::init(d, CLASSES, &mut weights_rng);

    let mut norm_rng = rng::stream(seed, Stream::Normalizer);
    let norm = match norm_kind {
        NormKind::None => Normalizer::None,
        NormKind::Batch => Normalizer::Batch(BatchNormState::new(d)),
        NormKind::LearnableShared => {
            Normalizer::LearnableShared(init_fin(1, d, momentum, &mut norm_rng)?)
        }
        NormKind::FairIdentity => {
            if group_count == 0 {
                return Err(Error::Config("FIN needs at least one group".into()));
            }
            Normalizer::FairIdentity(init_fin(group_count, d, momentum, &mut norm_rng)?)
        }
    };
    MlpModel::new(backbone, norm, head)
}

impl MlpModel {
    pub fn new(backbone: Vec<Affine>, norm: Normalizer, head: Affine) -> Result<Self> {
        if backbone.is_empty() {
            return Err(Error::Shape("backbone needs at least one layer".into()));
        }
        for (k, pair) in backbone.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "backbone layer {k} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (k, layer) in backbone.iter().chain(std::iter::once(&head)).enumerate() {
            if layer.b.len() != layer.outputs() {
                return Err(Error::Shape(format!("layer {k} bias length mismatch")));
            }
        }
        let d = backbone.last().expect("non-empty").outputs();
        if head.inputs() != d || head.outputs() != CLASSES {
            return Err(Error::Shape(format!(
                "head is {}x{}, expected {d}x{CLASSES}",
                head.inputs(),
                head.outputs()
            )));
        }
        if let Some(nd) = norm.dim() {
            if nd != d {
                return Err(Error::Shape(format!(
                    "normalizer has {nd} features, backbone produces {d}"
                )));
            }
        }
        Ok(Self {
            backbone,
            norm,
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.backbone[0].inputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.head.inputs()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.backbone.iter().map(Affine::outputs))
            .collect()
    }

    pub fn forward(
        &self,
        x: &Array2<f64>,
        attrs: &[Attribute],
        mode: Mode,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if attrs.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "{} attributes for a batch of {}",
                attrs.len(),
                x.nrows()
            )));
        }
        let last = self.backbone.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.backbone.len());
        let mut hidden = Vec::with_capacity(last);
        let mut a = x.clone();
        for (k, layer) in self.backbone.iter().enumerate() {
            let h = layer.apply(&a);
            layer_inputs.push(a);
            if k < last {
                a = h.mapv(relu);
                hidden.push(h);
            } else {
                a = h;
            }
        }
        let (normed, norm) = self.norm.forward(&a, attrs, mode)?;
        let logits = self.head.apply(&normed);
        Ok((
            logits,
            ForwardCache {
                layer_inputs,
                hidden,
                norm,
                head_input: normed,
            },
        ))
    }

    pub fn backward(&self, cache: ForwardCache, grad_logits: &Array2<f64>) -> Result<Gradients> {
        if grad_logits.dim() != (cache.head_input.nrows(), CLASSES) {
            return Err(Error::CacheMismatch(format!(
                "logit gradient {:?} for a batch of {}",
                grad_logits.dim(),
                cache.head_input.nrows()
            )));
        }
        if cache.layer_inputs.len() != self.backbone.len() {
            return Err(Error::CacheMismatch("cache has a different layer count".into()));
        }
        let head = Affine {
            w: cache.head_input.t().dot(grad_logits),
            b: grad_logits.sum_axis(Axis(0)),
        };
        let grad_normed = grad_logits.dot(&self.head.w.t());
        let (mut grad_h, norm) = self.norm.backward(&grad_normed, cache.norm)?;

        let mut backbone = Vec::with_capacity(self.backbone.len());
        let mut hidden = cache.hidden;
        for (k, layer) in self.backbone.iter().enumerate().rev() {
            let input = &cache.layer_inputs[k];
            backbone.push(Affine {
                w: input.t().dot(&grad_h),
                b: grad_h.sum_axis(Axis(0)),
            });
            let grad_a = grad_h.dot(&layer.w.t());
            grad_h = match hidden.pop() {
                Some(mut pre) => {
                    pre.zip_mut_with(&grad_a, |p, &g| *p = if *p > 0.0 { g } else { 0.0 });
                    pre
                }
                None => grad_a,
            };
        }
        backbone.reverse();
        Ok(Gradients {
            backbone,
            norm,
            head,
            input: grad_h,
        })
    }

    /// Positive-class probabilities in inference mode.
    pub fn predict(&self, x: &Array2<f64>, attrs: &[Attribute]) -> Result<Vec<f64>> {
        let (logits, _) = self.forward(x, attrs, Mode::Inference)?;
        Ok(softmax(&logits).column(1).to_vec())
    }

    /// Folds the batch statistics of a training pass into the BN running
    /// estimates; a no-op for the other normalizers.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if let (Normalizer::Batch(state), NormCache::Batch(c)) = (&mut self.norm, &cache.norm) {
            state.update_running_stats(c);
        }
    }

    /// Trainable tensors in a fixed order matching [`Gradients::blocks`].
    pub fn param_blocks_mut(&mut self) -> Vec<ParamBlock<'_>> {
        let mut blocks = Vec::new();
        for (k, layer) in self.backbone.iter_mut().enumerate() {
            push_affine(&mut blocks, &format!("backbone.{k}"), layer);
        }
        match &mut self.norm {
            Normalizer::None => {}
            Normalizer::Batch(s) => {
                blocks.push(block("norm.gamma", BlockKind::Normalizer, s.gamma.as_slice_mut()));
                blocks.push(block("norm.beta", BlockKind::Normalizer, s.beta.as_slice_mut()));
            }
            Normalizer::LearnableShared(p) | Normalizer::FairIdentity(p) => {
                blocks.push(block("norm.mu", BlockKind::Normalizer, p.mu.as_slice_mut()));
                blocks.push(block("norm.tau", BlockKind::Normalizer, p.tau.as_slice_mut()));
            }
        }
        push_affine(&mut blocks, "head", &mut self.head);
        blocks
    }
}

fn block<'a>(name: &str, kind: BlockKind, values: Option<&'a mut [f64]>) -> ParamBlock<'a> {
    ParamBlock {
        name: name.to_string(),
        kind,
        values: values.expect("parameters are stored contiguously"),
    }
}

fn push_affine<'a>(blocks: &mut Vec<ParamBlock<'a>>, prefix: &str, layer: &'a mut Affine) {
    blocks.push(block(&format!("{prefix}.w"), BlockKind::Weight, layer.w.as_slice_mut()));
    blocks.push(block(&format!("{prefix}.b"), BlockKind::Bias, layer.b.as_slice_mut()));
}

fn flat(a: Option<&[f64]>) -> &[f64] {
    a.expect("gradients are stored contiguously")
}

impl Gradients {
    /// Flat gradient tensors in the order of [`MlpModel::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.backbone {
            out.push(flat(layer.w.as_slice()));
            out.push(flat(layer.b.as_slice()));
        }
        match &self.norm {
            NormGrads::None => {}
            NormGrads::Batch { gamma, beta } => {
                out.push(flat(gamma.as_slice()));
                out.push(flat(beta.as_slice()));
            }
            NormGrads::Fin { mu, tau } => {
                out.push(flat(mu.as_slice()));
                out.push(flat(tau.as_slice()));
            }
        }
        out.push(flat(self.head.w.as_slice()));
        out.push(flat(self.head.b.as_slice()));
        out
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean cross-entropy over the batch and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() || logits.ncols() != CLASSES {
        return Err(Error::Shape(format!(
            "logits {:?} for {} labels",
            logits.dim(),
            labels.len()
        )));
    }
    if logits.nrows() == 0 {
        return Err(Error::Input("cross-entropy of an empty batch".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {l} is not binary")));
    }
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = softmax(logits);
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_sum = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += log_sum - row[label as usize];
        grad[[i, label as usize]] -= 1.0;
    }
    grad /= n;
    Ok((loss / n, grad))
}
