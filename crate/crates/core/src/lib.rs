//! Simulation and reconstruction of the vacuum field of an optical cavity
//! imaged with single atoms sent through a nanohole array.

pub mod beamsim;
pub mod config;
pub mod error;
pub mod io;
pub mod modegeom;
pub mod qdynamics;
pub mod recon;
pub mod seed;

pub use error::{Error, Result};
