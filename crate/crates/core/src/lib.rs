pub mod cluster;
pub mod error;
pub mod fp_scgan;
pub mod harness;
pub mod forecasters;
pub mod nn;
pub mod ranking;
pub mod ingest;
pub mod metrics;
pub mod seed;
pub mod trajectory;

pub use error::{Error, Result};
