//! Rich representations built from several independent training episodes,
//! and the linear-probing machinery used to measure them.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod nn;
pub mod probing;
pub mod richrep;
pub mod rng;
pub mod tasks;

pub use error::{Error, Result};
pub use matrix::{FeatureMatrix, Matrix};
pub use rng::Rng;
