//! Algorithms for missingness-MDPs: POMDPs whose observations reveal each
//! state feature either exactly or not at all.
//!
//! The crate is `no_std` (it only needs `alloc`). File formats, parallel
//! drivers and the command-line tool live in the `missmdp` companion crate.
//!
//! Module map:
//! - [`model`]: feature spaces, observations, indicator vectors, miss-MDPs,
//!   missingness tables and their exact classification.
//! - [`mgraph`]: missingness graphs and the learner assumptions they imply.
//! - [`simulate`]: trajectory sampling, datasets and occurrence counters.
//! - [`learn`]: the AMCAR, AsMAR and AIMI estimators.
//! - [`pac`]: Okamoto arithmetic and certification of learned tables.
//! - [`belief`]: Bayes filtering and successor-belief enumeration.
//! - [`plan`]: point-based alpha-vector solver and an exact small-instance oracle.
//! - [`eval`]: total-variation metrics and Monte Carlo policy evaluation.
//! - [`bench`]: ICU and Predator benchmark generators.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod belief;
pub mod bench;
pub mod error;
pub mod eval;
pub mod learn;
pub mod mgraph;
pub mod model;
pub mod pac;
pub mod plan;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{FeatureSpace, Indicator, MissMdp, MissingnessTable, Observation, StateId};
