//! Simulator and learning pipeline for predicting receiver gain codes under
//! out-of-band interference.

// `!(a < b)` is used deliberately so that NaN inputs fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agc;
pub mod artifacts;
pub mod config;
pub mod error;
pub mod labeling;
pub mod mlengine;
pub mod pipeline;
pub mod receiver;
pub mod runtime;
pub mod rxsim;
pub mod seed;
pub mod signalgen;

pub use error::{Error, Result};
