//! Run manifests: a config snapshot plus SHA-256 digests of every input and
//! output, so identical configs and inputs provably yield identical reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    pub stage_timings_ms: BTreeMap<String, u128>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot digest {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digest of the resolved config's analytical parameters (thresholds,
/// replicates, seed, bands, corpus format). Path fields are excluded: where
/// files live does not change report content, and input file identity is
/// already pinned by the manifest's per-input digests.
pub fn config_digest(config: &PipelineConfig) -> String {
    const PATH_FIELDS: [&str; 12] = [
        "corpus",
        "submissions",
        "annotations",
        "embeddings",
        "stopwords",
        "competence_terms",
        "whitelist",
        "lexicon_edits",
        "cluster_edits",
        "gender_map",
        "stereotype_map",
        "out_dir",
    ];
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        for field in PATH_FIELDS {
            map.remove(field);
        }
    }
    let json = serde_json::to_string(&value).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            config_digest: config_digest(config),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            stage_timings_ms: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(
            role.to_string(),
            FileDigest {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            },
        );
        Ok(())
    }

    pub fn record_output(&mut self, role: &str, path: &Path) -> Result<()> {
        self.outputs.insert(
            role.to_string(),
            FileDigest {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            },
        );
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n")
            .with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

/// Stopwatch for per-stage timings.
pub struct StageTimer {
    start: Instant,
}

impl StageTimer {
    pub fn start() -> Self {
        StageTimer {
            start: Instant::now(),
        }
    }

    pub fn finish(self, manifest: &mut RunManifest, stage: &str) {
        manifest
            .stage_timings_ms
            .insert(stage.to_string(), self.start.elapsed().as_millis());
    }
}
