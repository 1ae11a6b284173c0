//! Execution context threading quantizers, the crosstalk surrogate, noise
//! injection and the physical lookup backend through layer evaluation.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::gamma::{apply_gamma, apply_gamma_transpose};
use crate::nn::layers::{WeightKind, WeightStore};
use crate::quant::QuantSpec;
use crate::sim::{derive_seed, FoldMode, PhysicalProgram, TileConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

/// How MVM layers execute their products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Exact quantized math.
    Digital,
    /// Differentiable surrogate: W_q (Gamma x_q) with optional noise.
    Dpe,
    /// Inference through the simulated chip (sign-split, two passes).
    Lookup,
}

/// Per-run state for forward/backward evaluation.
pub struct ExecCtx {
    pub mode: Mode,
    pub training: bool,
    pub weight_quant: Option<QuantSpec>,
    pub act_quant: Option<QuantSpec>,
    /// Tile-sized crosstalk operator for the surrogate mode.
    pub gamma: Option<Matrix>,
    /// Tile order; sets the full scale of injected noise.
    pub order: usize,
    /// Training-time noise, relative to tile full scale.
    pub noise_sigma_rel: f64,
    pub rng: ChaCha8Rng,
    /// Batch-mean/var pairs produced by batch-norm layers this pass, in
    /// layer order; the trainer folds them into the running statistics.
    pub bn_updates: Vec<(Vec<f64>, Vec<f64>)>,
    lookup: Option<LookupState>,
    current_layer: usize,
}

struct LookupState {
    cfg: TileConfig,
    base_seed: u64,
    mvm_counter: u64,
    programs: BTreeMap<usize, (PhysicalProgram, PhysicalProgram)>,
}

impl ExecCtx {
    pub fn digital(weight_quant: Option<QuantSpec>, act_quant: Option<QuantSpec>, seed: u64) -> Self {
        Self {
            mode: Mode::Digital,
            training: false,
            weight_quant,
            act_quant,
            gamma: None,
            order: 1,
            noise_sigma_rel: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
            lookup: None,
            current_layer: 0,
        }
    }

    pub fn dpe(
        weight_quant: Option<QuantSpec>,
        act_quant: Option<QuantSpec>,
        gamma: Matrix,
        noise_sigma_rel: f64,
        seed: u64,
    ) -> Self {
        let order = gamma.rows();
        Self {
            mode: Mode::Dpe,
            training: false,
            weight_quant,
            act_quant,
            gamma: Some(gamma),
            order,
            noise_sigma_rel,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
            lookup: None,
            current_layer: 0,
        }
    }

    /// Inference through the simulated chip. Weights quantize on the signed
    /// companion of the tile's amplitude codebook, activations on the
    /// tile's input codebook.
    pub fn lookup(cfg: TileConfig, seed: u64) -> Self {
        let weight_quant = cfg.profile.weight_quant.symmetric_signed();
        let act_quant = cfg.profile.input_quant;
        let order = cfg.order;
        Self {
            mode: Mode::Lookup,
            training: false,
            weight_quant: Some(weight_quant),
            act_quant: Some(act_quant),
            gamma: None,
            order,
            noise_sigma_rel: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_updates: Vec::new(),
            lookup: Some(LookupState {
                cfg,
                base_seed: seed,
                mvm_counter: 0,
                programs: BTreeMap::new(),
            }),
            current_layer: 0,
        }
    }

    pub fn set_layer(&mut self, idx: usize) {
        self.current_layer = idx;
    }

    /// Apply the crosstalk surrogate to a quantized input (Dpe mode only).
    pub fn mix_input(&self, xq: &[f64]) -> Result<Vec<f64>> {
        match (&self.mode, &self.gamma) {
            (Mode::Dpe, Some(g)) => apply_gamma(xq, g),
            _ => Ok(xq.to_vec()),
        }
    }

    /// Transpose of [`Self::mix_input`] for gradients.
    pub fn unmix_gradient(&self, upstream: &[f64]) -> Result<Vec<f64>> {
        match (&self.mode, &self.gamma) {
            (Mode::Dpe, Some(g)) => apply_gamma_transpose(upstream, g),
            _ => Ok(upstream.to_vec()),
        }
    }

    /// Zero-mean Gaussian deviation resampled per forward pass during
    /// hardware-aware training.
    pub fn add_training_noise(&mut self, y: &mut [f64]) -> Result<()> {
        if !(self.training && self.mode == Mode::Dpe && self.noise_sigma_rel > 0.0) {
            return Ok(());
        }
        let normal = Normal::new(0.0, self.noise_sigma_rel * self.order as f64)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for v in y.iter_mut() {
            *v += normal.sample(&mut self.rng);
        }
        Ok(())
    }

    /// Execute one MVM on the simulated chip: signed weights split by sign
    /// into two programmed passes, subtracted digitally. Programs are
    /// cached per layer; every call draws a fresh derived noise seed.
    pub fn physical_matvec(&mut self, store: &WeightStore, xq: &[f64]) -> Result<Vec<f64>> {
        let WeightKind::Circulant { order } = store.kind else {
            return Err(Error::InvalidParameter(
                "physical execution requires circulant weights".into(),
            ));
        };
        let signed = self
            .weight_quant
            .ok_or_else(|| Error::InvalidParameter("lookup mode requires a weight codebook".into()))?;
        let state = self
            .lookup
            .as_mut()
            .ok_or_else(|| Error::InvalidParameter("lookup mode not configured".into()))?;
        if order != state.cfg.order {
            return Err(Error::Dimension(format!(
                "layer order {order} does not match tile order {}",
                state.cfg.order
            )));
        }
        let layer = self.current_layer;
        if !state.programs.contains_key(&layer) {
            let q_blocks = store.cols / order;
            let p_blocks = store.rows / order;
            let quantized: Vec<f64> = store.params.iter().map(|&v| signed.quantize(v)).collect();
            let build = |sign: f64| -> Result<PhysicalProgram> {
                let w = crate::circulant::BlockCirculantMatrix::from_fn(
                    p_blocks,
                    q_blocks,
                    order,
                    |bp, bq| {
                        let base = (bp * q_blocks + bq) * order;
                        quantized[base..base + order]
                            .iter()
                            .map(|&v| (sign * v).max(0.0))
                            .collect()
                    },
                )?;
                PhysicalProgram::program_prequantized(&w, &state.cfg, FoldMode::TimeMultiplexed)
            };
            let pos = build(1.0)?;
            let neg = build(-1.0)?;
            state.programs.insert(layer, (pos, neg));
        }
        let seed = derive_seed(state.base_seed, state.mvm_counter);
        state.mvm_counter += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pos, neg) = state.programs.get(&layer).expect("cached above");
        let y_pos = pos.apply(xq, Some(&mut rng), false)?;
        let y_neg = neg.apply(xq, Some(&mut rng), false)?;
        Ok(y_pos.iter().zip(&y_neg).map(|(p, n)| p - n).collect())
    }
}
