//! Workspace directory layout and per-stage manifests.
//!
//! Each stage writes into `<root>/<stage>/` and finishes with
//! `manifest.json`, which records the hash of the configuration that
//! produced it. A stage refuses to consume upstream artifacts whose hash
//! differs from what the current configuration would produce.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub counts: Value,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    /// Creates and returns the stage directory.
    pub fn output_dir(&self, stage: &str) -> Result<PathBuf, CliError> {
        let d = self.stage_dir(stage);
        fs::create_dir_all(&d).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", d.display())))?;
        Ok(d)
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.stage_dir(stage).join(file)
    }

    /// Path of an existing artifact, or a missing-artifact error naming it.
    pub fn require(&self, stage: &str, file: &str) -> Result<PathBuf, CliError> {
        existing(self.path(stage, file))
    }

    pub fn read_manifest(&self, stage: &str) -> Result<StageManifest, CliError> {
        let p = self.require(stage, "manifest.json")?;
        let text = fs::read_to_string(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_manifest(&self, stage: &str, cfg: &Config, counts: Value) -> Result<(), CliError> {
        let m = StageManifest {
            stage: stage.to_string(),
            config_hash: cfg.stage_hash(stage),
            counts,
        };
        let p = self.output_dir(stage)?.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }

    /// Verifies that the nearest upstream stage ran with the current
    /// configuration. Its hash covers every stage before it.
    pub fn check_upstream(&self, stage: &str, cfg: &Config) -> Result<(), CliError> {
        let Some(up) = cfg.upstream(stage).into_iter().next() else {
            return Ok(());
        };
        let m = self.read_manifest(up)?;
        let want = cfg.stage_hash(up);
        if m.config_hash != want {
            return Err(CliError::Validation(format!(
                "stage {up:?} was produced with a different configuration (hash {} vs {}); re-run it before {stage:?}",
                short(&m.config_hash),
                short(&want)
            )));
        }
        Ok(())
    }
}

pub fn existing(p: PathBuf) -> Result<PathBuf, CliError> {
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingArtifact(p))
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}
