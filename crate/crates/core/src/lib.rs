//! Compressive-sensing opportunistic feedback for random-beamforming MIMO
//! broadcast channels.
//!
//! Strong users report their CQI over a small set of shared multi-access
//! channels; the base station recovers the sparse report by LASSO or maximum
//! correlation, refines it by least squares, and schedules one user per beam.

pub mod channel;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod recovery;
pub mod rng;
pub mod special;
pub mod throughput;
pub mod training;
pub mod wishart;

pub use error::{Error, Result};
