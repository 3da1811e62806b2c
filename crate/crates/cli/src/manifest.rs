//! Run manifest: ties every artifact to the config and corpus digests that
//! produced it. The manifest carries wall-clock timestamps; report files do
//! not, so reports stay byte-reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    #[serde(default)]
    pub corpus_digest: Option<String>,
    #[serde(default)]
    pub created_at: Option<String>,
    #[serde(default)]
    pub updated_at: Option<String>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed_at: String,
    pub counts: Value,
}

impl RunManifest {
    /// Loads the manifest from the reports directory, or starts a fresh one.
    pub fn load_or_new(reports_dir: &Path, tool_version: &str, config_digest: &str) -> Self {
        let path = reports_dir.join(MANIFEST_FILE);
        if let Ok(raw) = std::fs::read_to_string(&path) {
            if let Ok(mut manifest) = serde_json::from_str::<RunManifest>(&raw) {
                manifest.tool_version = tool_version.to_string();
                manifest.config_digest = config_digest.to_string();
                return manifest;
            }
        }
        RunManifest {
            tool_version: tool_version.to_string(),
            config_digest: config_digest.to_string(),
            created_at: Some(Utc::now().to_rfc3339()),
            ..Default::default()
        }
    }

    pub fn record_stage(&mut self, stage: &str, counts: Value) {
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                completed_at: Utc::now().to_rfc3339(),
                counts,
            },
        );
    }

    pub fn save(&mut self, reports_dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(reports_dir)?;
        self.updated_at = Some(Utc::now().to_rfc3339());
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        std::fs::write(reports_dir.join(MANIFEST_FILE), body + "\n")?;
        Ok(())
    }
}
