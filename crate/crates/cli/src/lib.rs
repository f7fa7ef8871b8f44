//! Configuration and commands behind the `nop` binary.

pub mod commands;
pub mod config;

pub use commands::{exit_code, run, Command, Failure};
pub use config::RunConfig;
