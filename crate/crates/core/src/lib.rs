//! Unsupervised discovery of recurring events in multivariate time series.
//!
//! Every sliding window is encoded with a self-supervised network into a
//! timestamp-level representation; the representations are clustered and the
//! resulting assignment sequence is split at its changepoints into segments.

pub mod error;
pub mod nn;
pub mod timeseries;

pub use error::{Error, Result};
pub mod clustering;
pub mod encoders;
pub mod evaluation;
pub mod representation;
pub mod segmentation;
pub mod pipeline;
pub mod synthgen;
