//! Outflow resistance calibration for blood-flow simulations.
//!
//! The crate covers measurement ingestion, simplicial meshes, a Taylor–Hood
//! Stokes solver with resistance outlets, an optimal-control calibrator for
//! the outlet resistances, classical baselines, a 0D RCR network and a
//! transient solver with wall shear stress indicators.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod error;
pub mod linalg;
pub mod lumped;
pub mod measurements;
pub mod fem;
pub mod mesh;
pub mod ocp;
pub mod transient;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
