//! Point-cloud ray tracing with polarimetric field computation, and a
//! learned surrogate that predicts propagation directions and interaction
//! matrices hop by hop.

pub mod acceptance;
pub mod cli;
pub mod em;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod scenegen;
pub mod seed;
pub mod surrogate;
pub mod tracer;

pub use error::{Error, Result};
