//! Configuration, subcommands and exit-code mapping behind the `qrt` binary.

pub mod commands;
pub mod config;
pub mod error;
