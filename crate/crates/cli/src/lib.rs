//! Configuration-driven runner for the two-bath QWZ lattice: reads a TOML
//! run description, validates it, solves every point and writes CSV or JSON
//! tables plus a checksummed `manifest.json`.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{validate, Diagnostic, Experiment, RunConfig};
pub use error::CliError;
pub use run::{load, run, RunManifest, RunOptions};
