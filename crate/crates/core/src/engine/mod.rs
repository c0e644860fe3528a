//! A small deterministic training engine.

pub mod data;
pub mod model;
pub mod optim;
pub mod train;

use thiserror::Error;

pub use data::{load_cifar_bin, load_idx, synth_blobs, DataError, Dataset, Split};
pub use model::{backward, forward, init_model, Arch, Forward, Gradients, Init, ModelSpec, ModelState};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};
pub use train::{train, train_with_model, TracePoint, TrainConfig, TrainTrace};

use crate::metrics::MetricsError;
use crate::schedules::ScheduleError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("feature width {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model or optimizer: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}
