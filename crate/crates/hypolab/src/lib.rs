//! Configuration, file formats and subcommands behind the `hypolab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, Command};
pub use config::RunConfig;
pub use error::CliError;
