//! Residual-network surrogates for PDEs with random coefficients.
//!
//! The network takes `(t, x, p)` (time only for transient problems) and is trained
//! so that its output satisfies the PDE for every draw of the random parameters
//! `p`. Once trained, statistics of the solution come from cheap forward passes.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod constraints;
mod error;
pub mod losses;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod resnet;
pub mod sampler;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
