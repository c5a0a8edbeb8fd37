//! Knowledge distillation between temporal knowledge graphs: a temporal
//! attention encoder with translational scoring, an attention-based alignment
//! module with adaptive strength, pseudo-alignment generation by maximum
//! weight matching, event transfer, the alternating trainer and evaluation.
//!
//! Numeric code is generic over [`numerics::Real`]; the aliases below fix the
//! scalar type.

pub mod alignment;
pub mod checkpoint;
pub mod config;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod numerics;
pub mod scoring;
pub mod trainer;

pub use alignment::{AlignParams, TemporalIntegration};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::TrainConfig;
pub use encoder::{EncoderConfig, NetworkParams};
pub use error::{Error, Result};
pub use eval::{MetricsReport, StepMetrics};
pub use numerics::{DenseMatrix, Real};
pub use trainer::{train_mpkd, TrainInputs, TrainState};

pub type Matrix = DenseMatrix<f64>;
pub type Matrix32 = DenseMatrix<f32>;
pub type Params = NetworkParams<f64>;
pub type Params32 = NetworkParams<f32>;
pub type Align = AlignParams<f64>;
pub type Align32 = AlignParams<f32>;
pub type State = TrainState<f64>;
pub type State32 = TrainState<f32>;
