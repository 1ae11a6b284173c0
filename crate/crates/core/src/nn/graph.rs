//! Layer chains, the softmax cross-entropy head, and the documented
//! desk-scale architecture.

use crate::error::{Error, Result};
use crate::nn::exec::ExecCtx;
use crate::nn::layers::{
    BatchNormLayer, ConvLayer, Layer, LayerCache, LinearLayer, ParamGrads, Tensor, WeightKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ordered layer chain ending in logits; the softmax cross-entropy head is
/// applied by the loss function, not stored as a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub layers: Vec<Layer>,
    /// Block order of the circulant layers (1 for dense baselines).
    pub order: usize,
    pub classes: usize,
}

impl LayerGraph {
    pub fn forward(
        &self,
        batch: &[Tensor],
        ctx: &mut ExecCtx,
    ) -> Result<(Vec<Tensor>, Vec<LayerCache>)> {
        let mut values = batch.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            ctx.set_layer(i);
            let (next, cache) = layer.forward_batch(&values, ctx)?;
            values = next;
            caches.push(cache);
        }
        Ok((values, caches))
    }

    /// Backpropagate logits gradients; returns per-layer parameter grads.
    pub fn backward(
        &self,
        dlogits: &[Tensor],
        caches: &[LayerCache],
        ctx: &ExecCtx,
    ) -> Result<Vec<ParamGrads>> {
        let mut deltas = dlogits.to_vec();
        let mut grads = vec![ParamGrads::None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (next, g) = layer.backward_batch(&deltas, &caches[i], ctx)?;
            deltas = next;
            grads[i] = g;
        }
        Ok(grads)
    }

    /// Stored scalars across all MVM weight tensors.
    pub fn weight_scalars(&self) -> usize {
        self.layers.iter().map(Layer::weight_scalars).sum()
    }

    /// Dense-equivalent scalars of the same tensors.
    pub fn dense_equivalent_scalars(&self) -> usize {
        self.layers.iter().map(Layer::dense_equivalent_scalars).sum()
    }
}

/// Mean softmax cross-entropy over a batch plus logits gradients.
pub fn softmax_cross_entropy(
    logits: &[Tensor],
    labels: &[usize],
) -> Result<(f64, Vec<Tensor>)> {
    if logits.len() != labels.len() {
        return Err(Error::Dimension("batch/label count mismatch".into()));
    }
    let batch = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (t, &label) in logits.iter().zip(labels) {
        let z = t.data();
        if label >= z.len() {
            return Err(Error::Dimension(format!(
                "label {label} outside {} logits",
                z.len()
            )));
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
        let sum: f64 = exp.iter().sum();
        loss += -(exp[label] / sum).ln() / batch;
        let g: Vec<f64> = exp
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let p = e / sum;
                (p - if i == label { 1.0 } else { 0.0 }) / batch
            })
            .collect();
        grads.push(Tensor::Flat(g));
    }
    Ok((loss, grads))
}

pub fn predict(logits: &Tensor) -> usize {
    logits
        .data()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn init_params(params: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt().min(0.9);
    for p in params.iter_mut() {
        *p = rng.gen_range(-bound..bound);
    }
}

fn conv(c_in: usize, c_out: usize, k: usize, kind: WeightKind, rng: &mut ChaCha8Rng) -> Result<Layer> {
    let mut layer = ConvLayer::new(c_in, c_out, k, kind)?;
    init_params(&mut layer.weights.params, k * k * c_in, c_out, rng);
    Ok(Layer::Conv(layer))
}

fn linear(in_dim: usize, out_dim: usize, kind: WeightKind, rng: &mut ChaCha8Rng) -> Result<Layer> {
    let mut layer = LinearLayer::new(in_dim, out_dim, kind)?;
    init_params(&mut layer.weights.params, in_dim, out_dim, rng);
    Ok(Layer::Linear(layer))
}

/// The documented desk-scale classifier for 1x12x12 inputs: two k=2
/// convolutions and two fully connected layers, every weight dimension a
/// multiple of the block order so structured storage needs no padding.
/// 10 live classes sit in 12 logits (the spare two stay untrained).
///
/// 1x12x12 -> conv(16,k2) -> BN -> ReLU -> pool -> conv(16,k2) -> BN ->
/// ReLU -> pool -> flatten(64) -> fc(64) -> ReLU -> fc(12)
pub fn desk_cnn(structured: bool, seed: u64) -> Result<LayerGraph> {
    let order = 4;
    let kind = if structured {
        WeightKind::Circulant { order }
    } else {
        WeightKind::Dense
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        conv(1, 16, 2, kind, &mut rng)?,
        Layer::BatchNorm(BatchNormLayer::new(16)),
        Layer::Relu,
        Layer::MaxPool2,
        conv(16, 16, 2, kind, &mut rng)?,
        Layer::BatchNorm(BatchNormLayer::new(16)),
        Layer::Relu,
        Layer::MaxPool2,
        Layer::Flatten,
        linear(64, 64, kind, &mut rng)?,
        Layer::Relu,
        linear(64, 12, kind, &mut rng)?,
    ];
    Ok(LayerGraph {
        layers,
        order: if structured { order } else { 1 },
        classes: 10,
    })
}

/// Two-layer perceptron for small sanity tasks.
pub fn tiny_mlp(in_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<LayerGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        linear(in_dim, hidden, WeightKind::Dense, &mut rng)?,
        Layer::Relu,
        linear(hidden, classes, WeightKind::Dense, &mut rng)?,
    ];
    Ok(LayerGraph {
        layers,
        order: 1,
        classes,
    })
}
