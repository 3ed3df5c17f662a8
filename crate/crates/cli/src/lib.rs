//! Batch runner for profile reconstruction: configuration, point-cloud and
//! result I/O, mesh export, and the `reconstruct`, `evaluate`, `synth` and
//! `ablate` commands.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod mesh;
pub mod run;

pub use config::{Mode, RunConfig};
pub use error::{CliError, Result};
