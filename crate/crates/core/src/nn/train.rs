//! Minibatch SGD with momentum over the fixed layer set, with seeded
//! shuffling and per-epoch statistics. Structured layers stay on the
//! circulant manifold by construction: only primary vectors are updated.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::data::Dataset;
use crate::nn::exec::{ExecCtx, Mode};
use crate::nn::graph::{predict, softmax_cross_entropy, LayerGraph};
use crate::nn::layers::{Layer, ParamGrads};
use crate::quant::QuantSpec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Digital,
    DpeDifferentiable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Training-noise deviation relative to tile full scale (DPE mode).
    pub noise_sigma_rel: f64,
    pub weight_quant: Option<QuantSpec>,
    pub act_quant: Option<QuantSpec>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "learning rate, batch size and epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must lie in [0, 1)".into()));
        }
        if self.noise_sigma_rel < 0.0 {
            return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

struct Velocity {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Train in place; deterministic for a fixed config and seed.
pub fn train(
    model: &mut LayerGraph,
    data: &Dataset,
    cfg: &TrainConfig,
    gamma: Option<&Matrix>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyRange("training set is empty".into()));
    }
    let mut ctx = match (cfg.mode, gamma) {
        (TrainMode::Digital, _) => ExecCtx::digital(cfg.weight_quant, cfg.act_quant, cfg.seed),
        (TrainMode::DpeDifferentiable, Some(g)) => ExecCtx::dpe(
            cfg.weight_quant,
            cfg.act_quant,
            g.clone(),
            cfg.noise_sigma_rel,
            cfg.seed,
        ),
        (TrainMode::DpeDifferentiable, None) => {
            return Err(Error::InvalidParameter(
                "hardware-aware training needs a fitted crosstalk operator".into(),
            ))
        }
    };
    ctx.training = true;

    let mut velocities: Vec<Option<Velocity>> = model
        .layers
        .iter_mut()
        .map(|l| {
            l.params_mut().map(|(w, b)| Velocity {
                weights: vec![0.0; w.len()],
                bias: vec![0.0; b.len()],
            })
        })
        .collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5u64.wrapping_shl(60));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data.images[i].clone()).collect();
            let labels: Vec<_> = chunk.iter().map(|&i| data.labels[i]).collect();
            ctx.bn_updates.clear();
            let (logits, caches) = model.forward(&batch, &mut ctx)?;
            apply_bn_updates(model, &ctx);
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss became non-finite at epoch {epoch}, batch {batches} \
                     (lr {}, batch size {})",
                    cfg.learning_rate, cfg.batch_size
                )));
            }
            correct += logits
                .iter()
                .zip(&labels)
                .filter(|(t, &l)| predict(t) == l)
                .count();
            epoch_loss += loss;
            batches += 1;
            let grads = model.backward(&dlogits, &caches, &ctx)?;
            sgd_step(model, &grads, &mut velocities, cfg)?;
        }
        history.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / batches as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(TrainHistory { epochs: history })
}

fn apply_bn_updates(model: &mut LayerGraph, ctx: &ExecCtx) {
    let mut updates = ctx.bn_updates.iter();
    for layer in model.layers.iter_mut() {
        if let Layer::BatchNorm(bn) = layer {
            if let Some((mean, var)) = updates.next() {
                for f in 0..bn.features {
                    bn.running_mean[f] =
                        (1.0 - bn.momentum) * bn.running_mean[f] + bn.momentum * mean[f];
                    bn.running_var[f] =
                        (1.0 - bn.momentum) * bn.running_var[f] + bn.momentum * var[f];
                }
            }
        }
    }
}

fn sgd_step(
    model: &mut LayerGraph,
    grads: &[ParamGrads],
    velocities: &mut [Option<Velocity>],
    cfg: &TrainConfig,
) -> Result<()> {
    for ((layer, grad), velocity) in model.layers.iter_mut().zip(grads).zip(velocities.iter_mut())
    {
        let Some((w, b)) = layer.params_mut() else {
            continue;
        };
        let Some(vel) = velocity else { continue };
        let (gw, gb): (&[f64], &[f64]) = match grad {
            ParamGrads::WeightsBias { weights, bias } => (weights, bias),
            ParamGrads::BatchNorm { gamma, beta } => (gamma, beta),
            ParamGrads::None => continue,
        };
        for ((p, v), g) in w.iter_mut().zip(vel.weights.iter_mut()).zip(gw) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *p += *v;
        }
        for ((p, v), g) in b.iter_mut().zip(vel.bias.iter_mut()).zip(gb) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *p += *v;
        }
    }
    Ok(())
}

/// Convenience used by evaluation paths: digital accuracy of the model.
pub fn mode_of(ctx: &ExecCtx) -> Mode {
    ctx.mode
}
