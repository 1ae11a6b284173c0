//! Inference over a trained model in digital, surrogate or chip-lookup
//! mode, with confusion-matrix metrics.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::data::Dataset;
use crate::nn::exec::ExecCtx;
use crate::nn::graph::{predict, LayerGraph};
use crate::nn::metrics::ConfusionMatrix;
use crate::quant::QuantSpec;
use crate::sim::TileConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    Digital,
    DpeDifferentiable,
    Lookup,
}

/// Everything inference needs beyond the model itself.
pub struct InferOptions {
    pub mode: InferMode,
    pub weight_quant: Option<QuantSpec>,
    pub act_quant: Option<QuantSpec>,
    /// Crosstalk operator (surrogate mode).
    pub gamma: Option<Matrix>,
    /// Simulated chip (lookup mode).
    pub tile: Option<TileConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

pub fn infer(model: &LayerGraph, data: &Dataset, opts: &InferOptions) -> Result<InferenceResult> {
    if data.is_empty() {
        return Err(Error::EmptyRange("inference set is empty".into()));
    }
    let mut ctx = match opts.mode {
        InferMode::Digital => ExecCtx::digital(opts.weight_quant, opts.act_quant, opts.seed),
        InferMode::DpeDifferentiable => {
            let gamma = opts.gamma.clone().ok_or_else(|| {
                Error::InvalidParameter("surrogate inference needs a crosstalk operator".into())
            })?;
            ExecCtx::dpe(opts.weight_quant, opts.act_quant, gamma, 0.0, opts.seed)
        }
        InferMode::Lookup => {
            let tile = opts.tile.clone().ok_or_else(|| {
                Error::InvalidParameter("lookup inference needs a tile configuration".into())
            })?;
            ExecCtx::lookup(tile, opts.seed)
        }
    };
    let mut confusion = ConfusionMatrix::new(model.classes.max(
        data.labels.iter().copied().max().map_or(0, |m| m + 1),
    ));
    let mut predictions = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    // One sample at a time: batch statistics never leak into inference.
    for (img, &label) in data.images.iter().zip(&data.labels) {
        let (logits, _) = model.forward(std::slice::from_ref(img), &mut ctx)?;
        let p = predict(&logits[0]);
        confusion.record(label, p);
        if p == label {
            correct += 1;
        }
        predictions.push(p);
    }
    Ok(InferenceResult {
        predictions,
        confusion,
        accuracy: correct as f64 / data.len() as f64,
    })
}
