//! End-to-end simulation of one order-l crossbar tile and its composition
//! into full block-circulant matrix-vector products.
//!
//! A physical pass quantizes operands, programs each weight ring by
//! monotone bisection of its detuning, scales every wavelength by the
//! shared input MZM, routes power through the switch grid (with optional
//! spectral-crosstalk leakage), sums per-port photocurrents with dark
//! current, optionally perturbs them with seeded Gaussian deviation, and
//! affinely de-calibrates back to numeric units.
//!
//! Matrices wider or taller than one tile run as time-multiplexed block
//! passes accumulated digitally; spectral folding instead maps block
//! columns onto additional FSR periods of the same switch grid.

use crate::circulant::{bcm_matvec, BlockCirculantMatrix, PrimaryVector};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::photonics::{
    mrr_drop_transmission, spectral_crosstalk_matrix, Branch, MrrParams, MzmParams, PdParams,
    WavelengthPlan,
};
use crate::quant::QuantSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Zero-mean Gaussian output deviation, relative to tile full scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_rel: f64,
    pub seed: u64,
    pub enabled: bool,
}

impl NoiseModel {
    pub fn disabled() -> Self {
        Self {
            sigma_rel: 0.0,
            seed: 0,
            enabled: false,
        }
    }
}

/// Shared ring template instantiated per channel from the wavelength plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingTemplate {
    pub quality_factor: f64,
    pub insertion_loss_db: f64,
    pub coupling_asymmetry: f64,
}

/// Device profile: every physical parameter of the simulated tile, with
/// explicit units. Serialized as JSON; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub mzm: MzmParams,
    pub weight_ring: RingTemplate,
    pub switch_ring: RingTemplate,
    /// Largest detuning the weight-programming heater can reach.
    pub weight_detuning_max_nm: f64,
    /// Plan slots whose modulation range sits on the right half-branch.
    pub right_branch_slots: Vec<usize>,
    pub pd: PdParams,
    pub plan: WavelengthPlan,
    pub laser_power_per_channel_w: f64,
    /// Calibrated transmission that encodes a full-scale weight.
    pub weight_full_scale_transmission: f64,
    pub weight_quant: QuantSpec,
    pub input_quant: QuantSpec,
    pub noise: NoiseModel,
    pub crosstalk_enabled: bool,
    /// Scale weight programming by the reference-channel responsivity ratio.
    pub responsivity_compensation: bool,
    /// Fixed receiver offset; cancels in two-pass subtraction.
    pub output_current_offset_a: f64,
}

impl DeviceProfile {
    /// The shipped order-4 profile: four explicit channels in one FSR,
    /// left-branch modulation except the topmost channel, and the noise
    /// deviation calibrated against the blur-demo error statistic.
    pub fn prototype() -> Self {
        DeviceProfile {
            mzm: MzmParams {
                extinction_ratio_db: 35.0,
                insertion_loss_db: 1.5,
                phase_per_unit_drive_rad: std::f64::consts::PI,
                drive_range: (0.0, 1.0),
            },
            weight_ring: RingTemplate {
                quality_factor: 3.0e4,
                insertion_loss_db: 0.5,
                coupling_asymmetry: 0.05,
            },
            switch_ring: RingTemplate {
                quality_factor: 3.0e4,
                insertion_loss_db: 0.5,
                coupling_asymmetry: 0.05,
            },
            weight_detuning_max_nm: 2.0,
            right_branch_slots: vec![3],
            pd: PdParams {
                responsivity_a_per_w: vec![(1500.0, 1.0), (1650.0, 0.94)],
                dark_current_a: 2e-6,
            },
            plan: WavelengthPlan::prototype(),
            laser_power_per_channel_w: 1e-3,
            weight_full_scale_transmission: 0.8,
            weight_quant: QuantSpec {
                bits: 6,
                lo: 0.0,
                hi: 1.0,
            },
            input_quant: QuantSpec {
                bits: 4,
                lo: 0.0,
                hi: 1.0,
            },
            noise: NoiseModel {
                sigma_rel: 5.6e-3,
                seed: 7,
                enabled: true,
            },
            crosstalk_enabled: true,
            responsivity_compensation: true,
            output_current_offset_a: 0.0,
        }
    }

    /// Prototype profile replicated across `folds` FSR periods.
    pub fn prototype_folded(folds: usize) -> Self {
        let mut p = Self::prototype();
        p.plan.folds = folds;
        p
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: DeviceProfile =
            serde_json::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.mzm.validate()?;
        self.pd.validate()?;
        self.plan.validate()?;
        if self.weight_detuning_max_nm <= 0.0 {
            return Err(Error::Profile("weight detuning range must be positive".into()));
        }
        if self.laser_power_per_channel_w <= 0.0 {
            return Err(Error::Profile("laser power must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.weight_full_scale_transmission) {
            return Err(Error::Profile(
                "weight full-scale transmission must lie in [0,1]".into(),
            ));
        }
        if self.weight_quant.lo != 0.0 || self.input_quant.lo != 0.0 {
            return Err(Error::Profile(
                "device codebooks are amplitude codes and must start at 0".into(),
            ));
        }
        if self.noise.sigma_rel < 0.0 {
            return Err(Error::Profile("noise sigma must be >= 0".into()));
        }
        if self.right_branch_slots.iter().any(|&s| s >= self.plan.slots()) {
            return Err(Error::Profile("right-branch slot index out of range".into()));
        }
        Ok(())
    }

    fn ring_at(&self, template: &RingTemplate, fold: usize, slot: usize) -> Result<MrrParams> {
        let branch = if self.right_branch_slots.contains(&slot) {
            Branch::Right
        } else {
            Branch::Left
        };
        Ok(MrrParams {
            resonant_wavelength_nm: self.plan.wavelength(fold, slot)?,
            quality_factor: template.quality_factor,
            fsr_nm: self.plan.fsr_nm,
            coupling_asymmetry: template.coupling_asymmetry,
            insertion_loss_db: template.insertion_loss_db,
            branch,
        })
    }
}

/// One order-l tile of the crossbar plus its full configuration.
#[derive(Debug, Clone)]
pub struct TileConfig {
    pub order: usize,
    pub profile: DeviceProfile,
}

impl TileConfig {
    pub fn new(order: usize, profile: DeviceProfile) -> Result<Self> {
        profile.validate()?;
        if order == 0 {
            return Err(Error::InvalidParameter("tile order must be >= 1".into()));
        }
        if profile.plan.slots() % order != 0 {
            return Err(Error::Profile(format!(
                "plan has {} slots per FSR, not a multiple of tile order {order}",
                profile.plan.slots()
            )));
        }
        Ok(Self { order, profile })
    }

    pub fn with_noise(&self, noise: NoiseModel) -> TileConfig {
        let mut cfg = self.clone();
        cfg.profile.noise = noise;
        cfg
    }

    pub fn with_seed(&self, seed: u64) -> TileConfig {
        let mut cfg = self.clone();
        cfg.profile.noise.seed = seed;
        cfg
    }

    /// Tile full scale in numeric units: l * w_max * x_max.
    pub fn full_scale_output(&self) -> f64 {
        self.order as f64 * self.profile.weight_quant.hi * self.profile.input_quant.hi
    }
}

/// Crossbar wavelength assignment: the switch at (row, col) is tuned to
/// slot (col - row) mod l of the tile's channel group.
pub fn switch_channel_slot(row: usize, col: usize, order: usize) -> usize {
    (col + order - row % order) % order
}

/// Deterministic per-stream seed derivation (splitmix64 of base ^ index).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = (base ^ index).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One tile with its weight rings already programmed; applying inputs is
/// then a cheap linear evaluation.
#[derive(Debug, Clone)]
pub struct ProgrammedTile {
    order: usize,
    /// Responsivity-weighted effective weight per intended slot, after
    /// crosstalk mixing: m[k*] = sum_k R_k * X[k*,k] * T_w[k].
    mixed_weights: Vec<f64>,
    switch_peak: f64,
    laser_power_w: f64,
    mzm_max: f64,
    mzm_min: f64,
    decode_scale: f64,
    full_scale_current: f64,
    dark_current_a: f64,
    offset_a: f64,
    sigma_rel: f64,
    noise_enabled: bool,
    input_quant: QuantSpec,
}

impl ProgrammedTile {
    /// Program quantized nonnegative weights (length l) onto the channel
    /// group at (fold, slot_offset).
    pub fn program(cfg: &TileConfig, weights: &[f64], fold: usize, slot_offset: usize) -> Result<Self> {
        let l = cfg.order;
        let p = &cfg.profile;
        if weights.len() != l {
            return Err(Error::Dimension(format!(
                "tile of order {l} got {} weights",
                weights.len()
            )));
        }
        if slot_offset % l != 0 || slot_offset + l > p.plan.slots() {
            return Err(Error::Dimension(format!(
                "slot offset {slot_offset} invalid for order {l} within {} slots",
                p.plan.slots()
            )));
        }
        if fold >= p.plan.folds {
            return Err(Error::Dimension(format!(
                "fold {fold} outside plan with {} folds",
                p.plan.folds
            )));
        }

        let reference_lambda = p.plan.wavelength(0, 0)?;
        let r_ref = p.pd.responsivity(reference_lambda)?;
        let t_fs = p.weight_full_scale_transmission;

        let mut lambdas = Vec::with_capacity(l);
        let mut t_weight = Vec::with_capacity(l);
        for (t, &w) in weights.iter().enumerate() {
            let slot = slot_offset + t;
            let lambda = p.plan.wavelength(fold, slot)?;
            let ring = p.ring_at(&p.weight_ring, fold, slot)?;
            ring.validate()?;
            if !(p.weight_quant.lo - 1e-12..=p.weight_quant.hi + 1e-12).contains(&w) {
                return Err(Error::DeviceRange(format!(
                    "weight element {t} = {w} outside amplitude codebook [{}, {}]",
                    p.weight_quant.lo, p.weight_quant.hi
                )));
            }
            let compensation = if p.responsivity_compensation {
                r_ref / p.pd.responsivity(lambda)?
            } else {
                1.0
            };
            let target = (w / p.weight_quant.hi) * t_fs * compensation;
            let peak = ring.peak_transmission();
            if target > peak * (1.0 + 1e-12) {
                return Err(Error::DeviceRange(format!(
                    "weight element {t} on channel {lambda:.3} nm needs drop transmission \
                     {target:.6}, ring peak is {peak:.6}"
                )));
            }
            t_weight.push(program_ring(&ring, target, p.weight_detuning_max_nm));
            lambdas.push(lambda);
        }

        // Switch bank for this group, statically on resonance; calibrated
        // to a uniform maximum output.
        let mut switches = Vec::with_capacity(l);
        for t in 0..l {
            let ring = p.ring_at(&p.switch_ring, fold, slot_offset + t)?;
            ring.validate()?;
            switches.push(ring);
        }
        let switch_peak = switches
            .iter()
            .map(MrrParams::peak_transmission)
            .fold(f64::INFINITY, f64::min);
        let crosstalk = if p.crosstalk_enabled {
            spectral_crosstalk_matrix(&lambdas, &switches)?
        } else {
            let mut ident = Matrix::zeros(l, l);
            for i in 0..l {
                ident.set(i, i, 1.0);
            }
            ident
        };

        let mut mixed = vec![0.0; l];
        for (k_star, slot_mix) in mixed.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..l {
                acc += p.pd.responsivity(lambdas[k])? * crosstalk.get(k_star, k) * t_weight[k];
            }
            *slot_mix = acc;
        }

        let mzm_max = p.mzm.max_operating_transmission();
        let mzm_min = p.mzm.min_operating_transmission();
        let unit = r_ref * p.laser_power_per_channel_w * t_fs * mzm_max * switch_peak;
        Ok(Self {
            order: l,
            mixed_weights: mixed,
            switch_peak,
            laser_power_w: p.laser_power_per_channel_w,
            mzm_max,
            mzm_min,
            decode_scale: unit / (p.weight_quant.hi * p.input_quant.hi),
            full_scale_current: unit * l as f64,
            dark_current_a: p.pd.dark_current_a,
            offset_a: p.output_current_offset_a,
            sigma_rel: p.noise.sigma_rel,
            noise_enabled: p.noise.enabled,
            input_quant: p.input_quant,
        })
    }

    /// Photocurrents for quantized inputs (length l), consuming `l` noise
    /// draws when the deviation model is enabled.
    pub fn photocurrents(&self, inputs: &[f64], rng: Option<&mut ChaCha8Rng>) -> Result<Vec<f64>> {
        let l = self.order;
        if inputs.len() != l {
            return Err(Error::Dimension(format!(
                "tile of order {l} got {} inputs",
                inputs.len()
            )));
        }
        // Calibrated proportional MZM encoding, clamped at the operating
        // floor: true zero transmission is not reachable.
        let drives: Vec<f64> = inputs
            .iter()
            .map(|&x| ((x / self.input_quant.hi) * self.mzm_max).clamp(self.mzm_min, self.mzm_max))
            .collect();
        let mut currents = Vec::with_capacity(l);
        for i in 0..l {
            let mut optical = 0.0;
            for (j, &u) in drives.iter().enumerate() {
                optical += u * self.mixed_weights[switch_channel_slot(i, j, l)];
            }
            currents.push(
                self.dark_current_a + self.offset_a + self.switch_peak * self.laser_power_w * optical,
            );
        }
        if let Some(rng) = rng {
            if self.noise_enabled && self.sigma_rel > 0.0 {
                let normal = Normal::new(0.0, self.sigma_rel * self.full_scale_current)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                for c in currents.iter_mut() {
                    *c += normal.sample(rng);
                }
            }
        }
        Ok(currents)
    }

    /// Affine de-calibration of a photocurrent back to numeric units.
    pub fn decode(&self, current: f64, subtract_floor: bool) -> f64 {
        let floor = if subtract_floor {
            self.dark_current_a + self.offset_a
        } else {
            0.0
        };
        (current - floor) / self.decode_scale
    }

    pub fn apply(&self, inputs: &[f64], rng: Option<&mut ChaCha8Rng>, subtract_floor: bool) -> Result<Vec<f64>> {
        Ok(self
            .photocurrents(inputs, rng)?
            .into_iter()
            .map(|c| self.decode(c, subtract_floor))
            .collect())
    }

    /// The fixed output floor (dark current plus receiver offset) in amps.
    pub fn floor_current_a(&self) -> f64 {
        self.dark_current_a + self.offset_a
    }
}

/// Program a ring to a target drop transmission by bisecting its detuning
/// on the configured branch; tolerance 1e-10 of full scale. Targets below
/// the far-detuned floor clamp to the floor.
fn program_ring(ring: &MrrParams, target: f64, detuning_max_nm: f64) -> f64 {
    let peak = ring.peak_transmission();
    let t_at = |delta: f64| {
        let lambda = match ring.branch {
            Branch::Left => ring.resonant_wavelength_nm - delta,
            Branch::Right => ring.resonant_wavelength_nm + delta,
        };
        mrr_drop_transmission(lambda, ring)
    };
    let floor = t_at(detuning_max_nm);
    if target >= peak {
        return peak;
    }
    if target <= floor {
        return floor;
    }
    let (mut lo, mut hi) = (0.0_f64, detuning_max_nm);
    // Transmission decreases monotonically with detuning on one branch.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (t_at(hi) - target).abs() <= 1e-10 {
            break;
        }
    }
    t_at(hi)
}

fn check_nonnegative_inputs(x: &[f64]) -> Result<()> {
    if let Some(bad) = x.iter().find(|v| **v < -1e-12 || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "activations must be nonnegative and finite, got {bad}"
        )));
    }
    Ok(())
}

fn quantize_primaries(w: &BlockCirculantMatrix, spec: &QuantSpec) -> BlockCirculantMatrix {
    w.map(|v| spec.quantize(v))
}

/// Reference semantics for the physical path: the exact product of the
/// quantized weights and inputs, physics bypassed.
pub fn forward_ideal(w: &BlockCirculantMatrix, x: &[f64], cfg: &TileConfig) -> Result<Vec<f64>> {
    check_dims(w, x, cfg)?;
    check_nonnegative_inputs(x)?;
    check_amplitude_range(w, &cfg.profile.weight_quant)?;
    let wq = quantize_primaries(w, &cfg.profile.weight_quant);
    let xq = cfg.profile.input_quant.quantize_all(x);
    bcm_matvec(&wq, &xq)
}

fn check_dims(w: &BlockCirculantMatrix, x: &[f64], cfg: &TileConfig) -> Result<()> {
    if w.order() != cfg.order {
        return Err(Error::Dimension(format!(
            "BCM order {} does not match tile order {}",
            w.order(),
            cfg.order
        )));
    }
    if x.len() != w.cols() {
        return Err(Error::Dimension(format!(
            "BCM is {}x{}, input has length {}",
            w.rows(),
            w.cols(),
            x.len()
        )));
    }
    Ok(())
}

fn check_amplitude_range(w: &BlockCirculantMatrix, spec: &QuantSpec) -> Result<()> {
    for (b, block) in w.blocks().iter().enumerate() {
        for (t, &v) in block.values().iter().enumerate() {
            if v < spec.lo - 1e-12 || v > spec.hi + 1e-12 {
                return Err(Error::DeviceRange(format!(
                    "weight {t} of block {b} = {v} outside amplitude range [{}, {}]; \
                     use the full-range path for signed weights",
                    spec.lo, spec.hi
                )));
            }
        }
    }
    Ok(())
}

/// How block columns map onto wavelength channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldMode {
    /// Every block pass reuses the base FSR (time multiplexing).
    TimeMultiplexed,
    /// Block columns map to successive FSR periods (spectral folding).
    Spectral,
}

/// A whole BCM with every block's weight rings programmed; inputs can then
/// be streamed through without re-running the programming bisections.
#[derive(Debug, Clone)]
pub struct PhysicalProgram {
    tiles: Vec<ProgrammedTile>, // row-major block grid
    block_rows: usize,
    block_cols: usize,
    order: usize,
    noise_enabled: bool,
    input_quant: QuantSpec,
}

impl PhysicalProgram {
    /// Quantize the weights on the amplitude codebook and program every
    /// block of the BCM.
    pub fn program(w: &BlockCirculantMatrix, cfg: &TileConfig, mode: FoldMode) -> Result<Self> {
        Self::program_inner(w, cfg, mode, true)
    }

    /// Program weight values as given. The heaters are continuous; this is
    /// the path for operands that were already quantized upstream (the
    /// full-range encodings quantize once on the signed codebook and then
    /// program exact shifted or split values).
    pub fn program_prequantized(
        w: &BlockCirculantMatrix,
        cfg: &TileConfig,
        mode: FoldMode,
    ) -> Result<Self> {
        Self::program_inner(w, cfg, mode, false)
    }

    fn program_inner(
        w: &BlockCirculantMatrix,
        cfg: &TileConfig,
        mode: FoldMode,
        quantize: bool,
    ) -> Result<Self> {
        if w.order() != cfg.order {
            return Err(Error::Dimension(format!(
                "BCM order {} does not match tile order {}",
                w.order(),
                cfg.order
            )));
        }
        check_amplitude_range(w, &cfg.profile.weight_quant)?;
        let l = cfg.order;
        let slots = cfg.profile.plan.slots();
        let wq = if quantize {
            quantize_primaries(w, &cfg.profile.weight_quant)
        } else {
            w.clone()
        };
        let mut tiles = Vec::with_capacity(w.block_rows() * w.block_cols());
        for p in 0..w.block_rows() {
            for q in 0..w.block_cols() {
                let (fold, offset) = match mode {
                    FoldMode::TimeMultiplexed => (0, (q * l) % slots),
                    FoldMode::Spectral => ((q * l) / slots, (q * l) % slots),
                };
                tiles.push(ProgrammedTile::program(
                    cfg,
                    wq.block(p, q).values(),
                    fold,
                    offset,
                )?);
            }
        }
        Ok(Self {
            tiles,
            block_rows: w.block_rows(),
            block_cols: w.block_cols(),
            order: l,
            noise_enabled: cfg.profile.noise.enabled,
            input_quant: cfg.profile.input_quant,
        })
    }

    pub fn cols(&self) -> usize {
        self.block_cols * self.order
    }

    pub fn rows(&self) -> usize {
        self.block_rows * self.order
    }

    /// Run one input vector through every block pass, accumulating
    /// digitally per output group. Noise draws are consumed in block
    /// row-major order so replay with the same seed is exact.
    pub fn apply(
        &self,
        x: &[f64],
        mut rng: Option<&mut ChaCha8Rng>,
        subtract_floor: bool,
    ) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "program expects {} inputs, got {}",
                self.cols(),
                x.len()
            )));
        }
        check_nonnegative_inputs(x)?;
        let l = self.order;
        let xq = self.input_quant.quantize_all(x);
        let mut y = vec![0.0; self.rows()];
        for p in 0..self.block_rows {
            for q in 0..self.block_cols {
                let tile = &self.tiles[p * self.block_cols + q];
                let seg = &xq[q * l..(q + 1) * l];
                let noise_rng = if self.noise_enabled {
                    rng.as_deref_mut()
                } else {
                    None
                };
                let out = tile.apply(seg, noise_rng, subtract_floor)?;
                for (acc, v) in y[p * l..(p + 1) * l].iter_mut().zip(out) {
                    *acc += v;
                }
            }
        }
        Ok(y)
    }
}

fn forward_physical_core(
    w: &BlockCirculantMatrix,
    x: &[f64],
    cfg: &TileConfig,
    seed: u64,
    subtract_floor: bool,
    mode: FoldMode,
    prequantized: bool,
) -> Result<Vec<f64>> {
    check_dims(w, x, cfg)?;
    let program = if prequantized {
        PhysicalProgram::program_prequantized(w, cfg, mode)?
    } else {
        PhysicalProgram::program(w, cfg, mode)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    program.apply(x, Some(&mut rng), subtract_floor)
}

/// Physical pass over a nonnegative-weight BCM, dark floor subtracted.
pub fn forward_physical(w: &BlockCirculantMatrix, x: &[f64], cfg: &TileConfig) -> Result<Vec<f64>> {
    forward_physical_core(w, x, cfg, cfg.profile.noise.seed, true, FoldMode::TimeMultiplexed, false)
}

/// Raw photocurrents of a single-block tile pass, floor not subtracted.
/// This is where the fixed output floor (the forbidden zone) is visible.
pub fn forward_physical_raw(block: &PrimaryVector, x: &[f64], cfg: &TileConfig) -> Result<Vec<f64>> {
    if block.order() != cfg.order || x.len() != cfg.order {
        return Err(Error::Dimension("raw pass expects one tile-sized block".into()));
    }
    check_nonnegative_inputs(x)?;
    let wq = cfg.profile.weight_quant.quantize_all(block.values());
    let xq = cfg.profile.input_quant.quantize_all(x);
    let tile = ProgrammedTile::program(cfg, &wq, 0, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.profile.noise.seed);
    let noise_rng = if cfg.profile.noise.enabled {
        Some(&mut rng)
    } else {
        None
    };
    tile.photocurrents(&xq, noise_rng)
}

/// Spectrally folded pass: an M x (r*N) BCM on an N-wide switch grid, block
/// columns routed across FSR periods with per-fold responsivity handling.
pub fn forward_folded(w: &BlockCirculantMatrix, x: &[f64], cfg: &TileConfig) -> Result<Vec<f64>> {
    let slots = cfg.profile.plan.slots();
    let needed_folds = (w.cols() + slots - 1) / slots;
    if needed_folds > cfg.profile.plan.folds {
        return Err(Error::Dimension(format!(
            "{} input columns need {needed_folds} FSR periods, plan has {}",
            w.cols(),
            cfg.profile.plan.folds
        )));
    }
    forward_physical_core(w, x, cfg, cfg.profile.noise.seed, true, FoldMode::Spectral, false)
}

/// Time-multiplexed execution strategy for signed weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullRangeMethod {
    SignSplit,
    BiasReference,
}

/// Execute a signed BCM as two physical passes subtracted digitally. The
/// subtraction cancels the dark-current floor and any common receiver
/// offset exactly; weights are quantized once on the signed companion
/// codebook before either encoding.
pub fn forward_fullrange(
    w: &BlockCirculantMatrix,
    x: &[f64],
    cfg: &TileConfig,
    method: FullRangeMethod,
) -> Result<Vec<f64>> {
    check_dims(w, x, cfg)?;
    check_nonnegative_inputs(x)?;
    let signed = cfg.profile.weight_quant.symmetric_signed();
    let wq = quantize_primaries(w, &signed);
    let seed = cfg.profile.noise.seed;
    match method {
        FullRangeMethod::SignSplit => {
            let pos = wq.map(|v| v.max(0.0));
            let neg = wq.map(|v| (-v).max(0.0));
            let y_pos = forward_physical_core(&pos, x, cfg, derive_seed(seed, 0), false, FoldMode::TimeMultiplexed, true)?;
            let y_neg = forward_physical_core(&neg, x, cfg, derive_seed(seed, 1), false, FoldMode::TimeMultiplexed, true)?;
            Ok(y_pos.iter().zip(&y_neg).map(|(p, n)| p - n).collect())
        }
        FullRangeMethod::BiasReference => {
            let values: Vec<f64> = wq.blocks().iter().flat_map(|b| b.values().to_vec()).collect();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            let xq = cfg.profile.input_quant.quantize_all(x);
            let input_sum: f64 = xq.iter().sum();
            if range == 0.0 {
                // Constant matrix: only the reference pass carries signal.
                let magnitude = wq.map(|v| v.abs());
                let y = forward_physical_core(&magnitude, x, cfg, derive_seed(seed, 0), true, FoldMode::TimeMultiplexed, true)?;
                let sign = if min < 0.0 { -1.0 } else { 1.0 };
                return Ok(y.into_iter().map(|v| sign * v).collect());
            }
            let shifted = wq.map(|v| (v - min) / range);
            let ref_level = (-min / range).clamp(0.0, 1.0);
            let reference = wq.map(|_| ref_level);
            let y_s = forward_physical_core(&shifted, x, cfg, derive_seed(seed, 0), false, FoldMode::TimeMultiplexed, true)?;
            let y_r = forward_physical_core(&reference, x, cfg, derive_seed(seed, 1), false, FoldMode::TimeMultiplexed, true)?;
            let correction = (min + ref_level * range) * input_sum;
            Ok(y_s
                .iter()
                .zip(&y_r)
                .map(|(s, r)| range * (s - r) + correction)
                .collect())
        }
    }
}

/// One waveform sample of a streamed MVM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamRecord {
    pub slot: usize,
    pub time_s: f64,
    pub port: usize,
    pub ideal: f64,
    pub simulated: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamResult {
    pub records: Vec<StreamRecord>,
    pub symbol_period_s: f64,
    pub baud: f64,
}

/// Stream the columns of an input matrix through the tile, one symbol slot
/// per column, with per-column derived noise seeds so serial and parallel
/// evaluation agree bit for bit.
pub fn run_mvm_stream(
    w: &BlockCirculantMatrix,
    columns: &Matrix,
    cfg: &TileConfig,
    symbol_period_s: f64,
) -> Result<StreamResult> {
    if symbol_period_s <= 0.0 {
        return Err(Error::InvalidParameter("symbol period must be positive".into()));
    }
    if columns.rows() != w.cols() {
        return Err(Error::Dimension(format!(
            "stream columns have {} rows, BCM has {} columns",
            columns.rows(),
            w.cols()
        )));
    }
    check_amplitude_range(w, &cfg.profile.weight_quant)?;
    let program = PhysicalProgram::program(w, cfg, FoldMode::TimeMultiplexed)?;
    let wq = quantize_primaries(w, &cfg.profile.weight_quant);
    let mut records = Vec::with_capacity(columns.cols() * w.rows());
    for c in 0..columns.cols() {
        let x: Vec<f64> = (0..columns.rows()).map(|r| columns.get(r, c)).collect();
        check_nonnegative_inputs(&x)?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.profile.noise.seed, c as u64));
        let simulated = program.apply(&x, Some(&mut rng), true)?;
        let ideal = bcm_matvec(&wq, &cfg.profile.input_quant.quantize_all(&x))?;
        for (port, (sim, idl)) in simulated.iter().zip(&ideal).enumerate() {
            records.push(StreamRecord {
                slot: c,
                time_s: c as f64 * symbol_period_s,
                port,
                ideal: *idl,
                simulated: *sim,
            });
        }
    }
    Ok(StreamResult {
        records,
        symbol_period_s,
        baud: 1.0 / symbol_period_s,
    })
}

/// Input-grid coverage policy for LUT generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutPolicy {
    /// Enumerate every input combination (levels^l entries per weight).
    FullGrid,
    /// Seeded random subsample of the input grid.
    Subsample { per_weight: usize },
}

const LUT_FULL_GRID_LIMIT: u64 = 1 << 20;

/// Sampled map from quantized (weight block, input vector) codes to
/// measured output vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lut {
    pub order: usize,
    pub weight_quant: QuantSpec,
    pub input_quant: QuantSpec,
    pub seed: u64,
    pub entries: BTreeMap<LutKey, Vec<f64>>,
}

pub type LutKey = (Vec<u32>, Vec<u32>);

impl Lut {
    pub fn lookup_codes(&self, weight_codes: &[u32], input_codes: &[u32]) -> Result<&[f64]> {
        self.entries
            .get(&(weight_codes.to_vec(), input_codes.to_vec()))
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::GridMismatch(format!(
                    "no LUT entry for weight codes {weight_codes:?}, input codes {input_codes:?}"
                ))
            })
    }

    /// Look up by values; both operands must lie on their codebooks.
    pub fn lookup(&self, weights: &[f64], inputs: &[f64]) -> Result<&[f64]> {
        for &w in weights {
            if !self.weight_quant.on_codebook(w) {
                return Err(Error::GridMismatch(format!("weight {w} off the codebook")));
            }
        }
        for &x in inputs {
            if !self.input_quant.on_codebook(x) {
                return Err(Error::GridMismatch(format!("input {x} off the codebook")));
            }
        }
        let wc: Vec<u32> = weights.iter().map(|&v| self.weight_quant.code_of(v)).collect();
        let xc: Vec<u32> = inputs.iter().map(|&v| self.input_quant.code_of(v)).collect();
        self.lookup_codes(&wc, &xc)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sweep the simulated chip response over input combinations for each
/// weight block. Deterministic for a fixed seed.
pub fn build_lut(cfg: &TileConfig, weight_blocks: &[Vec<f64>], policy: LutPolicy) -> Result<Lut> {
    let l = cfg.order;
    let wq_spec = cfg.profile.weight_quant;
    let xq_spec = cfg.profile.input_quant;
    let levels = xq_spec.levels() as u64;
    let mut entries = BTreeMap::new();
    let base_seed = cfg.profile.noise.seed;
    let mut entry_index = 0u64;

    for weights in weight_blocks {
        if weights.len() != l {
            return Err(Error::Dimension(format!(
                "weight block of length {}, tile order {l}",
                weights.len()
            )));
        }
        for &w in weights {
            if !wq_spec.on_codebook(w) {
                return Err(Error::GridMismatch(format!(
                    "weight {w} is not on the {}-bit codebook",
                    wq_spec.bits
                )));
            }
        }
        let wq: Vec<f64> = wq_spec.quantize_all(weights);
        let wcodes: Vec<u32> = wq.iter().map(|&v| wq_spec.code_of(v)).collect();
        let tile = ProgrammedTile::program(cfg, &wq, 0, 0)?;

        let emit = |xcodes: Vec<u32>, entry_index: &mut u64, entries: &mut BTreeMap<LutKey, Vec<f64>>| -> Result<()> {
            let xs: Vec<f64> = xcodes.iter().map(|&c| xq_spec.value_of_code(c)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, *entry_index));
            *entry_index += 1;
            let noise_rng = if cfg.profile.noise.enabled {
                Some(&mut rng)
            } else {
                None
            };
            let y = tile.apply(&xs, noise_rng, true)?;
            entries.insert((wcodes.clone(), xcodes), y);
            Ok(())
        };

        match policy {
            LutPolicy::FullGrid => {
                let total = levels.checked_pow(l as u32).unwrap_or(u64::MAX);
                if total > LUT_FULL_GRID_LIMIT {
                    return Err(Error::InvalidParameter(format!(
                        "full grid has {total} entries per weight block; use a \
                         subsample policy for tiles this large"
                    )));
                }
                for flat in 0..total {
                    let mut rem = flat;
                    let mut xcodes = vec![0u32; l];
                    for slot in xcodes.iter_mut().rev() {
                        *slot = (rem % levels) as u32;
                        rem /= levels;
                    }
                    emit(xcodes, &mut entry_index, &mut entries)?;
                }
            }
            LutPolicy::Subsample { per_weight } => {
                let mut grid_rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, 0x6772_6964));
                for _ in 0..per_weight {
                    let xcodes: Vec<u32> = (0..l)
                        .map(|_| grid_rng.gen_range(0..levels) as u32)
                        .collect();
                    emit(xcodes, &mut entry_index, &mut entries)?;
                }
            }
        }
    }
    Ok(Lut {
        order: l,
        weight_quant: wq_spec,
        input_quant: xq_spec,
        seed: base_seed,
        entries,
    })
}
