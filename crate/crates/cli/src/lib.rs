//! Command implementations behind the `msmae` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod ppm;

pub use error::CliError;
