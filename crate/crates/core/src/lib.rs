//! Romanian dialect identification with string kernels, a character-level
//! CNN and model ensembles.

pub mod charcnn;
pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod evalharness;
pub mod gradcam;
pub mod kernel_models;
pub mod strkernel;

pub use error::{Error, ErrorKind, Result};
