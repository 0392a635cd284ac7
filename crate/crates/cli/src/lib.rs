//! Command-line harness for the acoustic-hawking library: configuration,
//! subcommands and deterministic output.

pub mod commands;
pub mod config;
pub mod output;
