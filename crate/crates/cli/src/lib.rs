//! Command implementations behind the `graphspot` binary.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod replicate;

pub use error::{CliError, ErrorKind};
