//! Simulator and experiment harness for federated learning of binary
//! harmful-content text classifiers, with optional central differential
//! privacy and Rényi-DP accounting.
//!
//! The pipeline: [`ingest`] a labelled corpus, [`partition`] it into a test
//! split and homogeneous artificial clients, train with [`fedavg`] (optionally
//! through [`dp`]), score with [`metrics`], and bound the privacy loss with
//! [`accountant`]. [`experiment`] ties it together behind a config file.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod dp;
mod error;
pub mod experiment;
pub mod fedavg;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod monitor;
pub mod partition;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use model::TrainConfig;
