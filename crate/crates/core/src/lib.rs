//! Extreme multi-label link prediction over knowledge graphs.
//!
//! Triples are grouped into multi-label samples over incomplete patterns,
//! each sample is turned into a text input augmented with ranked one-hop
//! neighbors, and a small classifier is trained with a staged,
//! precision-weighted binary cross-entropy.

pub mod assemble;
pub mod config;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod samples;
pub mod synthetic;
pub mod text;
pub mod train;

pub use error::{Error, Result};
