//! Implicit neural image representations built on deep decoder priors.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece:
//! a small reverse-mode autodiff tape over dense `f64` tensors, the TITAN,
//! SIREN and deep decoder models, Adam / linearized Bregman optimizers,
//! a parallel-beam Radon operator with its exact adjoint, and image metrics
//! including a grid-sampled Lipschitz estimator.
//!
//! Everything that touches files, clocks or the command line lives in the
//! companion `titan` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` rejects NaN along with non-positive values; index loops
// mirror the matrix formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod autodiff;
mod error;
pub mod gradcheck;
mod kernels;
pub mod metrics;
pub mod models;
pub mod operators;
pub mod optim;
pub mod rng;
mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
