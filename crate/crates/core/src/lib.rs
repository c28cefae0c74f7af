//! Joint statistics of work and entropy production for slowly driven
//! Markovian open quantum systems.

pub mod cli;
pub mod config;
pub mod error;
pub mod ion;
pub mod lindblad;
pub mod protocol;
pub mod operator;
pub mod quad;
pub mod report;
pub mod slow;
pub mod tilted;
pub mod trajectory;

pub use error::{Error, Result};
