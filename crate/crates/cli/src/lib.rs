//! Library surface of the CLI: the run-config schema, the subcommand
//! implementations, and the output plumbing. The binary is a thin clap
//! wrapper around these.

pub mod commands;
pub mod config;
pub mod output;
