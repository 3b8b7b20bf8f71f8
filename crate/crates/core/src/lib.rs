//! Simulation and heavy-traffic analysis of single-server
//! earliest-deadline-first queues with reneging.

pub mod diffusion;
pub mod error;
pub mod measures;
pub mod predict;
pub mod primitives;
pub mod reference;
pub mod simulator;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use measures::{AtomicMeasure, Interval};
pub use scalar::{Exact, Scalar, EPS_MASS};
