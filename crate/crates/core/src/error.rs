//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("length {len} is not divisible by block order {order}")]
    NotDivisible { len: usize, order: usize },

    #[error("rank-deficient fit: need {needed} independent samples, got {got}")]
    RankDeficient { needed: usize, got: usize },

    #[error("value outside device dynamic range: {0}")]
    DeviceRange(String),

    #[error("lookup grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("power table does not cover {requested_hz} Hz (covered: {lo_hz}..{hi_hz}); extrapolation refused")]
    OutsideTable {
        requested_hz: f64,
        lo_hz: f64,
        hi_hz: f64,
    },

    #[error("device profile: {0}")]
    Profile(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("empty range: {0}")]
    EmptyRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
