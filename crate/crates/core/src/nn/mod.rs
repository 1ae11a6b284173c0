//! Structure-compressed neural networks: circulant layers with
//! hand-derived backward passes, quantization-aware and hardware-aware
//! (crosstalk-surrogate) training, chip-lookup inference, classification
//! metrics and the versioned checkpoint format.

pub mod checkpoint;
pub mod data;
pub mod exec;
pub mod gamma;
pub mod graph;
pub mod infer;
pub mod layers;
pub mod metrics;
pub mod train;

pub use checkpoint::Checkpoint;
pub use exec::{ExecCtx, Mode};
pub use gamma::{fit_gamma, forward_dpe, probe_tile_response, CrosstalkEstimate};
pub use graph::{desk_cnn, predict, softmax_cross_entropy, LayerGraph};
pub use infer::{infer, InferMode, InferOptions, InferenceResult};
pub use layers::{Layer, Tensor, WeightKind};
pub use metrics::{classify_metrics, ClassMetrics, ConfusionMatrix};
pub use train::{train, EpochStats, TrainConfig, TrainHistory, TrainMode};
