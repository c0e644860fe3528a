//! Learning-rate policy benchmarking.
//!
//! The crate is organised around the tuning pipeline:
//!
//! - [`schedules`]: the thirteen learning-rate functions and their parameters.
//! - [`metrics`]: utility, cost and robustness metrics for a trained model.
//! - [`engine`]: a small deterministic training engine (data loading,
//!   softmax-linear and MLP models, SGD/momentum/Nesterov).
//! - [`surface`]: gradient descent on two-dimensional analytic surfaces.
//! - [`tuner`]: range test, candidate generation, grid execution and ranking.
//! - [`store`]: an append-only file of tuning results with tiered
//!   recommendation.

pub mod engine;
pub mod metrics;
pub mod rng;
pub mod schedules;
pub mod surface;
pub mod store;
pub mod tuner;

pub use metrics::{MetricReport, PredictionBatch};
pub use schedules::{lr_at, LrKind, LrPolicy};
