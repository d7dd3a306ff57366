//! Simulation, conflict modelling and Monte-Carlo evaluation for an
//! autonomous agent resolving conflicts between maritime duties.

pub mod config;
pub mod conflict;
pub mod error;
pub mod montecarlo;
pub mod scenarios;
pub mod sim;
pub mod stats;
pub mod strategies;

pub use error::{Error, Result};
