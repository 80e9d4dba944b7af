#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod mc;
pub mod metrics;
pub mod pa;
pub mod precode;
pub mod rng;
pub mod scenario;
pub mod signal;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
