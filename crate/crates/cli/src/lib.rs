//! Staged command-line pipeline over a workspace directory.
//!
//! Stages run in order `synth, grid, localize, segment, label, chips,
//! train, score, eval`; each reads the previous stages' files from the
//! workspace and writes its own directory plus a `manifest.json`.

pub mod config;
pub mod error;
pub mod logging;
pub mod stages;
pub mod workspace;

pub use config::{Config, STAGES};
pub use error::CliError;
pub use stages::{run_pipeline, run_stage};
pub use workspace::Workspace;
