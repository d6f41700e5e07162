//! File formats and command implementations behind the `pointscatter`
//! binary.

pub mod bench;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod pgm;
pub mod points;

pub use error::{CliError, CliResult};
