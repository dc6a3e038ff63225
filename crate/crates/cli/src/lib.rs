//! Configuration, experiment commands and CSV output for the `cosim` tool.

pub mod commands;
pub mod config;
pub mod table;

pub use commands::{execute, write_atomic, CliError, Command};
pub use config::{ConfigError, Origin, RunConfig};
pub use table::{SpanLine, Table, TableError};
