//! Proxy-task alignment toolkit for anomalous sound detection.
//!
//! Scores frozen features with a linear probe and a Mahalanobis detector,
//! computes proxy-task metrics, correlates the two across configuration
//! families, and runs a three-stage alignment check over the result.

pub mod cli;
pub mod correlation;
pub mod dataio;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod scoring;
pub mod toyae;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::Matrix;
