//! Command-line front end: TOML configuration, command dispatch and
//! CSV / JSON-lines output.

pub mod config;
pub mod output;
mod run;

pub use config::{Command, ConfigError, Loaded, Overrides};
pub use run::{execute, run, run_str, CliError, Report, EXIT_CONFIG, EXIT_FAILED, EXIT_IO, EXIT_OK, EXIT_UNDECIDED};
