//! Uniform quantization onto a 2^bits-level codebook.
//!
//! Values are clamped to [lo, hi] and rounded half-away-from-zero to the
//! nearest level `lo + k * step` with `step = (hi - lo) / (2^bits - 1)`.
//! Both endpoints are on the codebook, so quantization is idempotent.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSpec {
    pub bits: u32,
    pub lo: f64,
    pub hi: f64,
}

impl QuantSpec {
    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::InvalidParameter(format!(
                "quantizer bits must be in 1..=16, got {bits}"
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quantizer range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { bits, lo, hi })
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    /// Least significant bit: the codebook step.
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.levels() - 1) as f64
    }

    /// Quantization code of a (clamped) value.
    pub fn code_of(&self, v: f64) -> u32 {
        let idx = (v.clamp(self.lo, self.hi) - self.lo) / self.step();
        // f64::round is half-away-from-zero; the index is nonnegative here.
        (idx.round() as u32).min(self.levels() - 1)
    }

    pub fn value_of_code(&self, code: u32) -> f64 {
        self.lo + code as f64 * self.step()
    }

    /// Clamp and round onto the codebook. Non-finite values propagate so
    /// they surface downstream instead of aliasing to a valid code.
    pub fn quantize(&self, v: f64) -> f64 {
        if !v.is_finite() {
            return v;
        }
        self.value_of_code(self.code_of(v))
    }

    pub fn quantize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&v| self.quantize(v)).collect()
    }

    /// Whether `v` lies on the codebook (up to rounding noise).
    pub fn on_codebook(&self, v: f64) -> bool {
        (self.quantize(v) - v).abs() <= 1e-9 * self.step().max(1e-300)
    }

    /// Signed companion spec spanning [-hi, hi] at the same bit width.
    pub fn symmetric_signed(&self) -> QuantSpec {
        QuantSpec {
            bits: self.bits,
            lo: -self.hi,
            hi: self.hi,
        }
    }
}
