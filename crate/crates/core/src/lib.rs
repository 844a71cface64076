//! Noise-accelerated Gibbs-state preparation in spin-1/2 chains.

pub mod analysis;
pub mod circuit;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod linalg;
pub mod metrology;
pub mod noise;
pub mod spinmodel;
pub mod state;
pub mod svg;

pub use error::{Error, Result};
