//! Software twin of a block-circulant photonic tensor core.
//!
//! The crate has three layers:
//! - structured linear algebra: block-circulant matrices, FFT-based
//!   circular matrix-vector products, and im2col convolution lowering;
//! - device-level simulation of the WDM microring crossbar, including
//!   quantization, spectral crosstalk, dark current, Gaussian output
//!   deviation, full-range weight execution and spectral folding;
//! - structure-compressed neural networks with hardware-aware training,
//!   and the analytical throughput/power/area model of the accelerator.

pub mod benchmark;
pub mod circulant;
pub mod error;
pub mod fft;
pub mod linalg;
pub mod lowering;
pub mod nn;
pub mod photonics;
pub mod quant;
pub mod sim;

pub use circulant::{BlockCirculantMatrix, PrimaryVector};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lowering::{ImageTensor, KernelSet, LoweredConv};
pub use photonics::{MrrParams, MzmParams, PdParams, WavelengthPlan};
pub use quant::QuantSpec;
pub use sim::{DeviceProfile, NoiseModel, TileConfig};
