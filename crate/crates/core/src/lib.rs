//! Compositional stability certification for structure-preserving power-system
//! models: per-device delta-dissipativity checks, a network coupling condition,
//! DAE simulation and region-of-attraction estimation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod calibration;
pub mod config;
pub mod coupling;
pub mod dae;
pub mod devices;
pub mod dissipativity;
pub mod error;
pub mod linalg;
pub mod network;
pub mod output;
pub mod region;
pub mod report;
pub mod roa;
pub mod twobus;

pub use error::{Error, Result};
