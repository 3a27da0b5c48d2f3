//! Continuous event detection on frame-feature streams.
//!
//! Frames are coded against a temporal codebook (LASSO) and a semantic
//! vocabulary (OMP), pooled by cumulative means, and scored by per-class
//! linear detectors trained with a max-margin cutting-plane learner whose
//! margins depend on the semantic channel.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autolabel;
pub mod cli;
pub mod codebook;
pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod learner;
pub mod seed;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
