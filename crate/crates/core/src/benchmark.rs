//! Analytical performance model of the accelerator: throughput, chip area,
//! critical-path insertion loss, laser power, per-component power
//! breakdown, efficiency and density metrics, the uncompressed-crossbar
//! comparison, the clock feasibility bound, and parameter sweeps.
//!
//! All fields carry their unit in the name (W, J, Hz, dB, mm2). The default
//! configuration is a single frozen calibration: the per-device footprints,
//! loss slopes, static power and the receive-chain bit factor are fitted
//! once so that every reference operating point holds simultaneously, and
//! they are never tuned per query.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Active weight-ring accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRingCountModel {
    /// One ring per independent parameter: M * r * N / l.
    PerParameter,
    /// One ring per crosspoint: M * N.
    PerCrosspoint,
    /// Externally supplied count.
    Explicit(u64),
}

/// ADC power against clock rate; linear interpolation between knots,
/// extrapolation refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcPowerTable {
    /// (clock Hz, power W) knots, strictly increasing in Hz.
    pub points_hz_w: Vec<(f64, f64)>,
}

impl AdcPowerTable {
    pub fn power_w(&self, clock_hz: f64) -> Result<f64> {
        let t = &self.points_hz_w;
        let (lo, hi) = (t[0].0, t[t.len() - 1].0);
        if clock_hz < lo || clock_hz > hi {
            return Err(Error::OutsideTable {
                requested_hz: clock_hz,
                lo_hz: lo,
                hi_hz: hi,
            });
        }
        let idx = t.partition_point(|&(hz, _)| hz <= clock_hz).min(t.len() - 1);
        if idx == 0 {
            return Ok(t[0].1);
        }
        let (h0, p0) = t[idx - 1];
        let (h1, p1) = t[idx];
        if h1 == h0 {
            return Ok(p1);
        }
        Ok(p0 + (p1 - p0) * (clock_hz - h0) / (h1 - h0))
    }
}

/// Per-device silicon footprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprints {
    pub input_modulator_mm2: f64,
    pub weight_ring_mm2: f64,
    pub crosspoint_mm2: f64,
    pub receiver_mm2: f64,
    pub routing_overhead_mm2: f64,
}

/// Critical-path insertion loss, affine in the crossbar dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossModel {
    pub base_db: f64,
    pub per_input_column_db: f64,
    pub per_output_row_db: f64,
}

/// Propagation-delay model bounding the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub base_s: f64,
    pub per_element_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub rows_m: usize,
    pub cols_n: usize,
    pub order_l: usize,
    pub folds_r: usize,
    pub clock_hz: f64,
    pub mzm_energy_j_per_symbol: f64,
    pub mrr_hold_power_w: f64,
    pub adc_power: AdcPowerTable,
    pub tia_energy_j_per_bit: f64,
    pub output_bits: u32,
    pub footprints: Footprints,
    pub loss: LossModel,
    pub pd_sensitivity_floor_w: f64,
    pub weight_ring_count_model: WeightRingCountModel,
    pub mrr_thermal_enabled: bool,
    pub static_power_w: f64,
    /// Per-weight DAC/driver cost of the uncompressed baseline only.
    pub baseline_driver_power_w_per_weight: f64,
    pub latency: LatencyModel,
}

impl HardwareConfig {
    /// Unit audit: every quantity must be finite and in its physical range.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clock_hz", self.clock_hz),
            ("mzm_energy_j_per_symbol", self.mzm_energy_j_per_symbol),
            ("pd_sensitivity_floor_w", self.pd_sensitivity_floor_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        let nonnegative = [
            ("mrr_hold_power_w", self.mrr_hold_power_w),
            ("tia_energy_j_per_bit", self.tia_energy_j_per_bit),
            ("static_power_w", self.static_power_w),
            ("baseline_driver_power_w_per_weight", self.baseline_driver_power_w_per_weight),
            ("loss.base_db", self.loss.base_db),
            ("loss.per_input_column_db", self.loss.per_input_column_db),
            ("loss.per_output_row_db", self.loss.per_output_row_db),
            ("footprints.input_modulator_mm2", self.footprints.input_modulator_mm2),
            ("footprints.weight_ring_mm2", self.footprints.weight_ring_mm2),
            ("footprints.crosspoint_mm2", self.footprints.crosspoint_mm2),
            ("footprints.receiver_mm2", self.footprints.receiver_mm2),
            ("footprints.routing_overhead_mm2", self.footprints.routing_overhead_mm2),
            ("latency.base_s", self.latency.base_s),
            ("latency.per_element_s", self.latency.per_element_s),
        ];
        for (name, v) in nonnegative {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.rows_m == 0 || self.cols_n == 0 || self.order_l == 0 || self.folds_r == 0 {
            return Err(Error::InvalidParameter("dimensions must be positive".into()));
        }
        if self.output_bits == 0 {
            return Err(Error::InvalidParameter("output_bits must be >= 1".into()));
        }
        if self.adc_power.points_hz_w.is_empty() {
            return Err(Error::InvalidParameter("ADC table must be non-empty".into()));
        }
        if self.adc_power.points_hz_w.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParameter(
                "ADC table clocks must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: HardwareConfig =
            serde_json::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Active weight rings under the configured accounting model.
    pub fn weight_ring_count(&self) -> u64 {
        match self.weight_ring_count_model {
            WeightRingCountModel::PerParameter => {
                (self.rows_m * self.folds_r * self.cols_n / self.order_l) as u64
            }
            WeightRingCountModel::PerCrosspoint => (self.rows_m * self.cols_n) as u64,
            WeightRingCountModel::Explicit(n) => n,
        }
    }

    /// WDM channels driven by the laser: r * N.
    pub fn channel_count(&self) -> u64 {
        (self.folds_r * self.cols_n) as u64
    }
}

/// The shipped calibration. The loss slope, PD floor, static power, TIA bit
/// factor, footprints and the baseline driver cost were fitted once against
/// the reference operating points of the scaled design and are frozen here.
pub fn default_hardware_config() -> HardwareConfig {
    HardwareConfig {
        rows_m: 48,
        cols_n: 48,
        order_l: 4,
        folds_r: 1,
        clock_hz: 1e10,
        mzm_energy_j_per_symbol: 0.35e-12,
        mrr_hold_power_w: 3e-3,
        adc_power: AdcPowerTable {
            points_hz_w: vec![(1e10, 39e-3), (2.5e10, 194e-3)],
        },
        tia_energy_j_per_bit: 0.65e-12,
        output_bits: 2,
        footprints: Footprints {
            input_modulator_mm2: 0.04,
            weight_ring_mm2: 0.010633105074372285,
            crosspoint_mm2: 5e-4,
            receiver_mm2: 4e-3,
            routing_overhead_mm2: 0.11236240499661515,
        },
        loss: LossModel {
            base_db: 0.0,
            per_input_column_db: 0.5338494655157693,
            per_output_row_db: 0.5338494655157693,
        },
        pd_sensitivity_floor_w: 1.2163554653353686e-8,
        weight_ring_count_model: WeightRingCountModel::PerParameter,
        mrr_thermal_enabled: true,
        static_power_w: 0.3654074413583624,
        baseline_driver_power_w_per_weight: 0.0036681532004197268,
        latency: LatencyModel {
            base_s: 10e-12,
            per_element_s: 0.5e-12,
        },
    }
}

/// Operations per second: 2 * M * (r*N) * f, one multiply plus one add per
/// crosspoint per cycle.
pub fn ops_rate(cfg: &HardwareConfig) -> f64 {
    2.0 * cfg.rows_m as f64 * (cfg.folds_r * cfg.cols_n) as f64 * cfg.clock_hz
}

/// Critical-path insertion loss, affine in the crossbar dimensions.
pub fn insertion_loss_critical_path(cfg: &HardwareConfig) -> f64 {
    cfg.loss.base_db
        + cfg.loss.per_input_column_db * cfg.cols_n as f64
        + cfg.loss.per_output_row_db * cfg.rows_m as f64
}

/// Laser power: the PD sensitivity floor pushed back through the critical
/// path loss, per WDM channel. Exponential in the dB loss, hence in size.
pub fn laser_power(cfg: &HardwareConfig) -> f64 {
    let loss_db = insertion_loss_critical_path(cfg);
    cfg.pd_sensitivity_floor_w * 10f64.powf(loss_db / 10.0) * cfg.channel_count() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerBreakdown {
    pub laser_w: f64,
    pub input_mod_w: f64,
    pub weight_mrr_w: f64,
    pub adc_w: f64,
    pub tia_w: f64,
    pub static_w: f64,
    pub total_w: f64,
}

impl PowerBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("laser", self.laser_w),
            ("input_mod", self.input_mod_w),
            ("weight_mrr", self.weight_mrr_w),
            ("adc", self.adc_w),
            ("tia", self.tia_w),
            ("static", self.static_w),
        ]
    }

    pub fn fractions(&self) -> [(&'static str, f64); 6] {
        self.components().map(|(n, w)| (n, w / self.total_w))
    }
}

pub fn power_breakdown(cfg: &HardwareConfig) -> Result<PowerBreakdown> {
    cfg.validate()?;
    let input_mod_w = cfg.channel_count() as f64 * cfg.mzm_energy_j_per_symbol * cfg.clock_hz;
    let weight_mrr_w = if cfg.mrr_thermal_enabled {
        cfg.weight_ring_count() as f64 * cfg.mrr_hold_power_w
    } else {
        0.0
    };
    let adc_w = cfg.rows_m as f64 * cfg.adc_power.power_w(cfg.clock_hz)?;
    let tia_w =
        cfg.rows_m as f64 * cfg.tia_energy_j_per_bit * cfg.output_bits as f64 * cfg.clock_hz;
    let laser_w = laser_power(cfg);
    let static_w = cfg.static_power_w;
    let total_w = laser_w + input_mod_w + weight_mrr_w + adc_w + tia_w + static_w;
    Ok(PowerBreakdown {
        laser_w,
        input_mod_w,
        weight_mrr_w,
        adc_w,
        tia_w,
        static_w,
        total_w,
    })
}

/// Chip area: input modulators, the weight-ring bank, the switch matrix,
/// receivers and a fixed routing overhead. Folding reuses the switch
/// matrix and receivers, so area grows sublinearly in r.
pub fn area_model(cfg: &HardwareConfig) -> f64 {
    let f = &cfg.footprints;
    cfg.channel_count() as f64 * f.input_modulator_mm2
        + cfg.weight_ring_count() as f64 * f.weight_ring_mm2
        + (cfg.rows_m * cfg.cols_n) as f64 * f.crosspoint_mm2
        + cfg.rows_m as f64 * f.receiver_mm2
        + f.routing_overhead_mm2
}

/// (TOPS/W, TOPS/mm2).
pub fn efficiency_and_density(cfg: &HardwareConfig) -> Result<(f64, f64)> {
    let tops = ops_rate(cfg) / 1e12;
    let power = power_breakdown(cfg)?.total_w;
    let area = area_model(cfg);
    Ok((tops / power, tops / area))
}

/// Power-efficiency ratio against an uncompressed ring crossbar of the same
/// dimensions: every crosspoint holds an actively programmed ring with its
/// own DAC/driver, and there is no folding.
pub fn compare_uncompressed(cfg: &HardwareConfig) -> Result<f64> {
    cfg.validate()?;
    let mut base = cfg.clone();
    base.folds_r = 1;
    base.weight_ring_count_model = WeightRingCountModel::PerCrosspoint;
    base.mrr_thermal_enabled = true;
    let driver_w = (base.rows_m * base.cols_n) as f64 * cfg.baseline_driver_power_w_per_weight;
    let base_power = power_breakdown(&base)?.total_w + driver_w;
    let base_eff = ops_rate(&base) / 1e12 / base_power;
    let (eff, _) = efficiency_and_density(cfg)?;
    Ok(eff / base_eff)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    /// None when the configured delays are zero (unbounded clock).
    pub max_clock_hz: Option<f64>,
    pub feasible: bool,
}

/// Clock bound: the cycle must cover the tile latency, which grows
/// linearly with the matrix size.
pub fn latency_bound(cfg: &HardwareConfig) -> LatencyReport {
    let delay =
        cfg.latency.base_s + cfg.latency.per_element_s * (cfg.rows_m + cfg.cols_n) as f64;
    if delay <= 0.0 {
        return LatencyReport {
            max_clock_hz: None,
            feasible: true,
        };
    }
    let max_clock_hz = 1.0 / delay;
    LatencyReport {
        max_clock_hz: Some(max_clock_hz),
        feasible: cfg.clock_hz <= max_clock_hz,
    }
}

/// Ranges of a Cartesian sweep over square crossbars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sizes: Vec<usize>,
    pub folds: Vec<usize>,
    pub clocks_hz: Vec<f64>,
    pub thermal: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub size_n: usize,
    pub folds_r: usize,
    pub clock_hz: f64,
    pub mrr_thermal: bool,
    pub tops: f64,
    pub area_mm2: f64,
    pub power: PowerBreakdown,
    pub tops_per_w: f64,
    pub tops_per_mm2: f64,
    pub laser_fraction: f64,
    pub ratio_vs_uncompressed: f64,
    pub insertion_loss_db: f64,
    pub clock_feasible: bool,
}

/// Cartesian sweep in deterministic order (sizes, folds, clocks, thermal).
pub fn sweep(base: &HardwareConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.sizes.is_empty() || spec.folds.is_empty() || spec.clocks_hz.is_empty() || spec.thermal.is_empty()
    {
        return Err(Error::EmptyRange("sweep ranges must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for &n in &spec.sizes {
        for &r in &spec.folds {
            for &clock in &spec.clocks_hz {
                for &thermal in &spec.thermal {
                    let mut cfg = base.clone();
                    cfg.rows_m = n;
                    cfg.cols_n = n;
                    cfg.folds_r = r;
                    cfg.clock_hz = clock;
                    cfg.mrr_thermal_enabled = thermal;
                    let power = power_breakdown(&cfg)?;
                    let (tops_per_w, tops_per_mm2) = efficiency_and_density(&cfg)?;
                    rows.push(SweepRow {
                        size_n: n,
                        folds_r: r,
                        clock_hz: clock,
                        mrr_thermal: thermal,
                        tops: ops_rate(&cfg) / 1e12,
                        area_mm2: area_model(&cfg),
                        laser_fraction: power.laser_w / power.total_w,
                        tops_per_w,
                        tops_per_mm2,
                        ratio_vs_uncompressed: compare_uncompressed(&cfg)?,
                        insertion_loss_db: insertion_loss_critical_path(&cfg),
                        clock_feasible: latency_bound(&cfg).feasible,
                        power,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(n: usize, r: usize, thermal: bool) -> HardwareConfig {
        let mut cfg = default_hardware_config();
        cfg.rows_m = n;
        cfg.cols_n = n;
        cfg.folds_r = r;
        cfg.mrr_thermal_enabled = thermal;
        cfg
    }

    #[test]
    fn ops_rate_reference_points() {
        assert_eq!(ops_rate(&at(48, 1, true)), 4.608e13);
        assert_eq!(ops_rate(&at(48, 4, true)), 1.8432e14);
        let mut zero = at(48, 1, true);
        zero.clock_hz = 0.0;
        assert_eq!(ops_rate(&zero), 0.0);
    }

    #[test]
    fn ops_rate_linear_in_each_factor() {
        let base = ops_rate(&at(24, 1, true));
        assert_eq!(ops_rate(&at(48, 1, true)), base * 4.0); // M and N both doubled
        assert_eq!(ops_rate(&at(24, 2, true)), base * 2.0);
        let mut fast = at(24, 1, true);
        fast.clock_hz *= 2.0;
        assert_eq!(ops_rate(&fast), base * 2.0);
    }

    #[test]
    fn loss_is_affine_and_increasing() {
        let mut cfg = at(16, 1, true);
        cfg.loss = LossModel {
            base_db: 0.0,
            per_input_column_db: 0.25,
            per_output_row_db: 0.0,
        };
        let l16 = insertion_loss_critical_path(&cfg);
        cfg.cols_n = 32;
        assert!((insertion_loss_critical_path(&cfg) - 2.0 * l16).abs() < 1e-12);
        cfg.loss.per_input_column_db = 0.0;
        cfg.loss.base_db = 1.5;
        assert_eq!(insertion_loss_critical_path(&cfg), 1.5);
    }

    #[test]
    fn laser_power_db_scaling() {
        let mut cfg = at(8, 1, true);
        cfg.loss = LossModel {
            base_db: 0.0,
            per_input_column_db: 0.0,
            per_output_row_db: 0.0,
        };
        cfg.cols_n = 1;
        cfg.rows_m = 1;
        assert!((laser_power(&cfg) - cfg.pd_sensitivity_floor_w).abs() < 1e-24);
        cfg.loss.base_db = 10.0;
        assert!((laser_power(&cfg) - 10.0 * cfg.pd_sensitivity_floor_w).abs() < 1e-22);
    }

    #[test]
    fn breakdown_components_sum_and_units() {
        let cfg = at(48, 4, true);
        let p = power_breakdown(&cfg).unwrap();
        let sum: f64 = p.components().iter().map(|(_, w)| w).sum();
        assert!((p.total_w - sum).abs() < 1e-12);
        let frac: f64 = p.fractions().iter().map(|(_, f)| f).sum();
        assert!((frac - 1.0).abs() < 1e-9);
        assert!(p.components().iter().all(|&(_, w)| w >= 0.0));
        // ADC term pinned by the table.
        assert!((p.adc_w - 48.0 * 0.039).abs() < 1e-12);
        let mut fast = cfg.clone();
        fast.clock_hz = 2.5e10;
        assert!((power_breakdown(&fast).unwrap().adc_w - 48.0 * 0.194).abs() < 1e-12);
        let mut outside = cfg;
        outside.clock_hz = 5e10;
        assert!(matches!(
            power_breakdown(&outside),
            Err(Error::OutsideTable { .. })
        ));
    }

    #[test]
    fn thermal_toggle_removes_ring_hold_power() {
        let on = power_breakdown(&at(48, 4, true)).unwrap();
        let off = power_breakdown(&at(48, 4, false)).unwrap();
        let delta = on.total_w - off.total_w;
        assert_eq!(at(48, 4, true).weight_ring_count(), 2304);
        assert!((delta - 2304.0 * 3e-3).abs() < 1e-9);
    }

    #[test]
    fn calibration_closure_all_anchors_at_once() {
        // One frozen profile must satisfy every reference point together.
        let (eff1, dens1) = efficiency_and_density(&at(48, 1, true)).unwrap();
        assert!((eff1 - 9.53).abs() / 9.53 < 0.02, "eff r=1: {eff1}");
        assert!((dens1 - 4.85).abs() / 4.85 < 0.02, "density r=1: {dens1}");

        let (eff4, dens4) = efficiency_and_density(&at(48, 4, true)).unwrap();
        assert!((eff4 - 17.13).abs() / 17.13 < 0.02, "eff r=4: {eff4}");
        assert!((dens4 - 5.48).abs() / 5.48 < 0.02, "density r=4: {dens4}");

        let (eff4_off, _) = efficiency_and_density(&at(48, 4, false)).unwrap();
        assert!((eff4_off - 47.94).abs() / 47.94 < 0.02, "eff thermal off: {eff4_off}");

        let p64 = power_breakdown(&at(64, 1, true)).unwrap();
        let frac = p64.laser_w / p64.total_w;
        assert!((frac - 0.4314).abs() < 0.005, "laser fraction at 64: {frac}");

        let r1 = compare_uncompressed(&at(48, 1, true)).unwrap();
        assert!((r1 - 3.82).abs() / 3.82 < 0.05, "ratio r=1: {r1}");
        let r4 = compare_uncompressed(&at(48, 4, true)).unwrap();
        assert!((r4 - 6.87).abs() / 6.87 < 0.05, "ratio r=4: {r4}");
    }

    #[test]
    fn efficiency_peaks_at_48_over_the_sweep() {
        let effs: Vec<(usize, f64)> = [8usize, 16, 32, 48, 64]
            .iter()
            .map(|&n| (n, efficiency_and_density(&at(n, 1, true)).unwrap().0))
            .collect();
        let peak = effs.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(peak.0, 48, "efficiency profile: {effs:?}");
    }

    #[test]
    fn total_power_strictly_increasing_in_size_and_clock() {
        let mut last = 0.0;
        for n in [8, 16, 24, 32, 48, 64] {
            let p = power_breakdown(&at(n, 1, true)).unwrap().total_w;
            assert!(p > last);
            last = p;
        }
        let slow = power_breakdown(&at(32, 1, true)).unwrap().total_w;
        let mut cfg = at(32, 1, true);
        cfg.clock_hz = 2e10;
        assert!(power_breakdown(&cfg).unwrap().total_w > slow);
    }

    #[test]
    fn identical_baseline_gives_ratio_one() {
        let mut cfg = at(16, 1, true);
        cfg.order_l = 1;
        cfg.baseline_driver_power_w_per_weight = 0.0;
        let ratio = compare_uncompressed(&cfg).unwrap();
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folded_area_grows_sublinearly() {
        let a1 = area_model(&at(48, 1, true));
        let a4 = area_model(&at(48, 4, true));
        assert!(a4 < 4.0 * a1);
        assert!(a4 > a1);
    }

    #[test]
    fn latency_bound_boundary() {
        let mut cfg = at(48, 1, true);
        cfg.latency = LatencyModel {
            base_s: 0.0,
            per_element_s: 0.0,
        };
        let unbounded = latency_bound(&cfg);
        assert!(unbounded.max_clock_hz.is_none() && unbounded.feasible);

        cfg.latency = LatencyModel {
            base_s: 0.0,
            per_element_s: 1e-12,
        };
        let report = latency_bound(&cfg);
        let fmax = report.max_clock_hz.unwrap();
        cfg.clock_hz = fmax;
        assert!(latency_bound(&cfg).feasible);
        cfg.clock_hz = fmax * (1.0 + 1e-9);
        assert!(!latency_bound(&cfg).feasible);
        // Doubling N with zero base halves the bound.
        cfg.rows_m = 96;
        cfg.cols_n = 96;
        assert!((latency_bound(&cfg).max_clock_hz.unwrap() - fmax / 2.0).abs() / fmax < 1e-9);
    }

    #[test]
    fn sweep_rows_and_ordering() {
        let base = default_hardware_config();
        let spec = SweepSpec {
            sizes: vec![8, 16],
            folds: vec![1, 4],
            clocks_hz: vec![1e10],
            thermal: vec![true],
        };
        let rows = sweep(&base, &spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows.iter().map(|r| (r.size_n, r.folds_r)).collect::<Vec<_>>(),
            vec![(8, 1), (8, 4), (16, 1), (16, 4)]
        );
        let single = sweep(
            &base,
            &SweepSpec {
                sizes: vec![48],
                folds: vec![1],
                clocks_hz: vec![1e10],
                thermal: vec![true],
            },
        )
        .unwrap();
        assert_eq!(single.len(), 1);
        let empty = SweepSpec {
            sizes: vec![],
            folds: vec![1],
            clocks_hz: vec![1e10],
            thermal: vec![true],
        };
        assert!(sweep(&base, &empty).is_err());
    }
}
