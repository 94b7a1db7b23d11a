//! Experiment harness for TITAN and its baselines: configuration, image and
//! checkpoint files, the training loop, and the super-resolution, CT and
//! Lipschitz-sweep experiments behind the `titan` binary.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc_tuning;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod harness;
pub mod image_io;
pub mod model;
pub mod train;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use harness::{RunOutput, RunReport};
