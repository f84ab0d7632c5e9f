//! Heat-bath algorithmic cooling on diagonal n-qubit registers, and robust
//! GRAPE synthesis of the gates that implement it on a dipolar-coupled spin
//! system.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod format;
pub mod grape;
pub mod noise;
pub mod pulse;
pub mod report;
pub mod spin;
pub mod state;

pub use error::{Error, Result};
pub use state::{BiasVector, PopulationState};
