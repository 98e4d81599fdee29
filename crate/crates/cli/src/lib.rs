//! Command-line pipeline over the strandforge core: file formats, run
//! manifests, checkpoints and the subcommands themselves.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;

pub use cli::{run, Cli};
pub use error::{CliError, Result};
