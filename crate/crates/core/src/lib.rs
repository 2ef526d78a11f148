//! Relative martingales, skew Brownian motion and SDEs driven by relative
//! martingales, simulated on uniform grids and checked statistically.

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod excursions;
pub mod harness;
pub mod local_time;
pub mod numeric;
pub mod paths;
pub mod relmart;
pub mod sde;
pub mod skewbm;
pub mod suite;

pub use error::{Error, Result};
pub use paths::{RngStream, SamplePath, TimeGrid};
