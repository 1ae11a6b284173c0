//! Physical device models: Mach-Zehnder input modulators, microring weight
//! encoders and crossbar switches, photodetectors, WDM wavelength planning,
//! spectral crosstalk, and the Q-factor resolution bound.
//!
//! Transfer functions are textbook forms (raised-cosine MZM, add-drop
//! Lorentzian ring) with free parameters; the shipped defaults live in the
//! JSON device profile and are calibration choices, not measured values.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

/// Side of the resonance peak a weight ring modulates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Left,
    Right,
}

/// Mach-Zehnder modulator: broadband raised-cosine transmission, identical
/// for every wavelength channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MzmParams {
    pub extinction_ratio_db: f64,
    pub insertion_loss_db: f64,
    pub phase_per_unit_drive_rad: f64,
    /// Operating sub-range of the normalized drive, within [0, 1].
    pub drive_range: (f64, f64),
}

impl MzmParams {
    pub fn validate(&self) -> Result<()> {
        if self.extinction_ratio_db <= 0.0 {
            return Err(Error::Profile("MZM extinction ratio must be > 0 dB".into()));
        }
        if self.insertion_loss_db < 0.0 {
            return Err(Error::Profile("MZM insertion loss must be >= 0 dB".into()));
        }
        let (lo, hi) = self.drive_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::Profile(format!(
                "MZM drive range must be an interval inside [0,1], got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Extinction floor 10^(-ER/10).
    pub fn extinction_floor(&self) -> f64 {
        db_to_linear(-self.extinction_ratio_db)
    }

    /// Peak transmission 10^(-IL/10), reached at zero phase.
    pub fn peak_transmission(&self) -> f64 {
        db_to_linear(-self.insertion_loss_db)
    }

    /// Transmission at the low end of the operating drive range.
    pub fn max_operating_transmission(&self) -> f64 {
        mzm_transmission(self.drive_range.0, self).expect("validated range")
    }

    /// Transmission at the high end of the operating drive range.
    pub fn min_operating_transmission(&self) -> f64 {
        mzm_transmission(self.drive_range.1, self).expect("validated range")
    }
}

/// Raised-cosine MZM transmission at a normalized drive level.
pub fn mzm_transmission(drive: f64, p: &MzmParams) -> Result<f64> {
    let (lo, hi) = p.drive_range;
    if !(lo..=hi).contains(&drive) {
        return Err(Error::DeviceRange(format!(
            "MZM drive {drive} outside operating range [{lo}, {hi}]"
        )));
    }
    let phase = p.phase_per_unit_drive_rad * drive;
    let floor = p.extinction_floor();
    let shape = floor + (1.0 - floor) * (phase / 2.0).cos().powi(2);
    Ok(p.peak_transmission() * shape)
}

/// Microring resonator with a periodic Lorentzian drop response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrrParams {
    pub resonant_wavelength_nm: f64,
    pub quality_factor: f64,
    pub fsr_nm: f64,
    /// Peak reduction from asymmetric, lossy coupling, in [0, 1].
    pub coupling_asymmetry: f64,
    pub insertion_loss_db: f64,
    pub branch: Branch,
}

impl MrrParams {
    pub fn validate(&self) -> Result<()> {
        if self.quality_factor <= 0.0 {
            return Err(Error::Profile("ring Q must be positive".into()));
        }
        if self.fsr_nm <= 0.0 {
            return Err(Error::Profile("ring FSR must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.coupling_asymmetry) {
            return Err(Error::Profile("coupling asymmetry must lie in [0,1]".into()));
        }
        if self.insertion_loss_db < 0.0 || self.resonant_wavelength_nm <= 0.0 {
            return Err(Error::Profile("ring loss/wavelength out of range".into()));
        }
        Ok(())
    }

    /// Lorentzian full width at half maximum: lambda / Q.
    pub fn fwhm_nm(&self) -> f64 {
        self.resonant_wavelength_nm / self.quality_factor
    }

    /// On-resonance drop transmission.
    pub fn peak_transmission(&self) -> f64 {
        db_to_linear(-self.insertion_loss_db) * (1.0 - self.coupling_asymmetry)
    }
}

/// Wrap a detuning into (-fsr/2, fsr/2].
fn wrap_detuning(delta_nm: f64, fsr_nm: f64) -> f64 {
    let mut d = delta_nm % fsr_nm;
    if d > fsr_nm / 2.0 {
        d -= fsr_nm;
    } else if d <= -fsr_nm / 2.0 {
        d += fsr_nm;
    }
    d
}

/// Drop-port transmission at a wavelength: periodic Lorentzian line shape
/// with FWHM = lambda/Q, peak reduced by loss and coupling asymmetry.
pub fn mrr_drop_transmission(lambda_nm: f64, p: &MrrParams) -> f64 {
    let delta = wrap_detuning(lambda_nm - p.resonant_wavelength_nm, p.fsr_nm);
    let half_width = p.fwhm_nm() / 2.0;
    p.peak_transmission() / (1.0 + (delta / half_width).powi(2))
}

/// Photodetector: wavelength-dependent responsivity (piecewise-linear
/// table) plus dark current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdParams {
    /// (wavelength nm, responsivity A/W) knots, strictly increasing in nm.
    pub responsivity_a_per_w: Vec<(f64, f64)>,
    pub dark_current_a: f64,
}

impl PdParams {
    pub fn validate(&self) -> Result<()> {
        if self.responsivity_a_per_w.is_empty() {
            return Err(Error::Profile("responsivity table must be non-empty".into()));
        }
        if self
            .responsivity_a_per_w
            .windows(2)
            .any(|w| w[0].0 >= w[1].0)
        {
            return Err(Error::Profile(
                "responsivity table wavelengths must be strictly increasing".into(),
            ));
        }
        if self.responsivity_a_per_w.iter().any(|&(_, r)| r < 0.0) {
            return Err(Error::Profile("responsivity must be >= 0".into()));
        }
        if self.dark_current_a < 0.0 {
            return Err(Error::Profile("dark current must be >= 0".into()));
        }
        Ok(())
    }

    /// Piecewise-linear responsivity; refuses wavelengths outside the table.
    pub fn responsivity(&self, lambda_nm: f64) -> Result<f64> {
        let t = &self.responsivity_a_per_w;
        let (lo, hi) = (t[0].0, t[t.len() - 1].0);
        if lambda_nm < lo || lambda_nm > hi {
            return Err(Error::OutsideTable {
                requested_hz: lambda_nm,
                lo_hz: lo,
                hi_hz: hi,
            });
        }
        let idx = t.partition_point(|&(w, _)| w <= lambda_nm).min(t.len() - 1);
        if idx == 0 {
            return Ok(t[0].1);
        }
        let (w0, r0) = t[idx - 1];
        let (w1, r1) = t[idx];
        if w1 == w0 {
            return Ok(r1);
        }
        Ok(r0 + (r1 - r0) * (lambda_nm - w0) / (w1 - w0))
    }
}

/// WDM photocurrent: dark current plus responsivity-weighted sum over
/// channels. This additive sum is the accumulate step of the MVM.
pub fn pd_response(powers_w: &[(f64, f64)], p: &PdParams) -> Result<f64> {
    let mut current = p.dark_current_a;
    for &(lambda_nm, power) in powers_w {
        if power < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative optical power {power} at {lambda_nm} nm"
            )));
        }
        current += p.responsivity(lambda_nm)? * power;
    }
    Ok(current)
}

/// The four operating wavelengths of the shipped order-4 profile (nm).
pub const PROTOTYPE_WAVELENGTHS_NM: [f64; 4] = [1545.5, 1551.0, 1560.5, 1563.0];

/// WDM channel assignment: `slots` wavelengths inside one FSR, replicated
/// across `folds` FSR periods. Logical channel i maps to
/// (fold = i / slots, slot = i % slots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthPlan {
    pub slot_wavelengths_nm: Vec<f64>,
    pub fsr_nm: f64,
    pub folds: usize,
}

impl WavelengthPlan {
    pub fn new(slot_wavelengths_nm: Vec<f64>, fsr_nm: f64, folds: usize) -> Result<Self> {
        let plan = Self {
            slot_wavelengths_nm,
            fsr_nm,
            folds,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_wavelengths_nm.is_empty() {
            return Err(Error::Profile("plan needs at least one channel".into()));
        }
        if self.folds == 0 {
            return Err(Error::Profile("fold count must be >= 1".into()));
        }
        if self.fsr_nm <= 0.0 {
            return Err(Error::Profile("FSR must be positive".into()));
        }
        if self
            .slot_wavelengths_nm
            .windows(2)
            .any(|w| w[0] >= w[1])
        {
            return Err(Error::Profile(
                "channels within one FSR must be strictly increasing".into(),
            ));
        }
        let span = self.slot_wavelengths_nm.last().unwrap() - self.slot_wavelengths_nm[0];
        if span >= self.fsr_nm {
            return Err(Error::Profile(format!(
                "channel span {span} nm does not fit within one FSR of {} nm",
                self.fsr_nm
            )));
        }
        Ok(())
    }

    /// Uniformly spaced plan: slot s sits at base + s * fsr / n.
    pub fn uniform(n_slots: usize, fsr_nm: f64, base_nm: f64, folds: usize) -> Result<Self> {
        if n_slots == 0 {
            return Err(Error::Profile("plan needs at least one slot".into()));
        }
        let slots = (0..n_slots)
            .map(|s| base_nm + s as f64 * fsr_nm / n_slots as f64)
            .collect();
        Self::new(slots, fsr_nm, folds)
    }

    /// The shipped four-channel prototype assignment.
    pub fn prototype() -> Self {
        Self {
            slot_wavelengths_nm: PROTOTYPE_WAVELENGTHS_NM.to_vec(),
            fsr_nm: 20.0,
            folds: 1,
        }
    }

    pub fn slots(&self) -> usize {
        self.slot_wavelengths_nm.len()
    }

    pub fn channel_count(&self) -> usize {
        self.slots() * self.folds
    }

    pub fn wavelength(&self, fold: usize, slot: usize) -> Result<f64> {
        if fold >= self.folds || slot >= self.slots() {
            return Err(Error::Dimension(format!(
                "channel (fold {fold}, slot {slot}) outside plan {}x{}",
                self.folds,
                self.slots()
            )));
        }
        Ok(self.slot_wavelengths_nm[slot] + fold as f64 * self.fsr_nm)
    }

    pub fn wavelength_of_index(&self, index: usize) -> Result<f64> {
        self.wavelength(index / self.slots(), index % self.slots())
    }

    pub fn index_of(&self, fold: usize, slot: usize) -> usize {
        fold * self.slots() + slot
    }
}

/// Uniformly spaced plan over r folds; the (1, 4) configuration can instead
/// load the explicit prototype channels via [`WavelengthPlan::prototype`].
pub fn plan_wavelengths(n_slots: usize, fsr_nm: f64, base_nm: f64, folds: usize) -> Result<WavelengthPlan> {
    WavelengthPlan::uniform(n_slots, fsr_nm, base_nm, folds)
}

/// Channel-leakage coefficients of a bank of switches, one tuned to each
/// channel: entry (i, j) is switch i's drop transmission at channel j,
/// normalized so the diagonal is exactly 1.
pub fn spectral_crosstalk_matrix(channels_nm: &[f64], rings: &[MrrParams]) -> Result<Matrix> {
    let n = channels_nm.len();
    if rings.len() != n {
        return Err(Error::Dimension(format!(
            "{n} channels but {} switch rings",
            rings.len()
        )));
    }
    let mut m = Matrix::zeros(n, n);
    for (i, ring) in rings.iter().enumerate() {
        let on_peak = mrr_drop_transmission(channels_nm[i], ring);
        if on_peak <= 0.0 {
            return Err(Error::Profile(format!(
                "switch {i} has zero on-resonance transmission"
            )));
        }
        for (j, &lam) in channels_nm.iter().enumerate() {
            m.set(i, j, mrr_drop_transmission(lam, ring) / on_peak);
        }
    }
    Ok(m)
}

/// Geometry assumptions behind the Q-factor bound: uniform spacing FSR/N
/// around a center wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QBoundGeometry {
    pub center_wavelength_nm: f64,
    pub fsr_nm: f64,
}

impl Default for QBoundGeometry {
    fn default() -> Self {
        // 3.2 nm FSR corresponds to a ~30 um ring radius around 1550 nm.
        Self {
            center_wavelength_nm: 1550.0,
            fsr_nm: 3.2,
        }
    }
}

/// Worst-case aggregated off-channel leakage at one channel when all other
/// N-1 channels carry full-scale signals, at uniform spacing FSR/N with
/// circular wrap.
pub fn aggregate_leakage(q: f64, n_channels: usize, geom: &QBoundGeometry) -> f64 {
    let spacing = geom.fsr_nm / n_channels as f64;
    let half_width = geom.center_wavelength_nm / q / 2.0;
    let mut sum = 0.0;
    for k in 1..n_channels {
        let dist = k.min(n_channels - k) as f64 * spacing;
        sum += 1.0 / (1.0 + (dist / half_width).powi(2));
    }
    sum
}

/// Smallest Q such that the aggregated leakage stays at or below half of
/// one LSB of a `bits`-bit full-scale signal. Bisection to 1e-6 relative.
pub fn min_q_for_resolution(n_channels: usize, bits: u32, geom: &QBoundGeometry) -> Result<f64> {
    if n_channels < 2 {
        return Err(Error::InvalidParameter(
            "Q bound needs at least two channels".into(),
        ));
    }
    if bits == 0 {
        return Err(Error::InvalidParameter("bits must be >= 1".into()));
    }
    if geom.fsr_nm <= 0.0 || geom.center_wavelength_nm <= 0.0 {
        return Err(Error::InvalidParameter("invalid Q-bound geometry".into()));
    }
    let threshold = 0.5 / ((1u64 << bits) - 1) as f64;
    let (mut lo, mut hi) = (1.0_f64, 1e14_f64);
    if aggregate_leakage(lo, n_channels, geom) <= threshold {
        return Ok(lo);
    }
    if aggregate_leakage(hi, n_channels, geom) > threshold {
        return Err(Error::InvalidParameter(format!(
            "no Q below 1e14 meets {bits}-bit leakage for N={n_channels}"
        )));
    }
    // Leakage is strictly decreasing in Q, so the crossing is unique.
    while hi / lo > 1.0 + 1e-6 {
        let mid = (lo * hi).sqrt();
        if aggregate_leakage(mid, n_channels, geom) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

pub(crate) fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
