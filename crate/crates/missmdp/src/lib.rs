//! Standard-library companion to `missmdp-core`: text file formats,
//! rayon-backed dataset generation and evaluation, and convergence sweeps.

pub mod error;
pub mod experiment;
pub mod formats;
pub mod parallel;

pub use error::{Error, Result};
