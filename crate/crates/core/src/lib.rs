//! Structure-preserving JKO simulator for the phase-field surfactant model
//! with moving contact lines.
pub mod analysis;
pub mod config;
pub mod constraint;
pub mod driver;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod prox;
pub mod solver;
pub mod spectral;
pub mod wall;
pub use error::{Error, Result};
