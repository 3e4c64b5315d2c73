//! Run configuration: one JSON file, overridable from the command line with
//! `--set key.path=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use daef::anomaly::ThresholdSpec;
use daef::data::{CsvSchema, DatasetManifest};
use daef::federation::FedMode;
use daef::model::Architecture;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub architecture: Architecture,
    #[serde(default)]
    pub threshold: Option<ThresholdSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_one")]
    pub partitions: usize,
    #[serde(default = "default_one")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub federation: FederationConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetConfig {
    /// Path to a dataset manifest, resolved relative to the config file.
    Manifest { manifest: PathBuf },
    /// Inline label schema.
    Inline(CsvSchema),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FederationConfig {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_mode")]
    pub mode: FedMode,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            mode: default_mode(),
        }
    }
}

fn default_folds() -> usize {
    10
}

fn default_one() -> usize {
    1
}

fn default_nodes() -> usize {
    2
}

fn default_mode() -> FedMode {
    FedMode::LayerSync
}

impl RunConfig {
    /// Loads the config, applies `--set` overrides, then validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let config: RunConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config
            .architecture
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(spec) = &config.threshold {
            spec.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if config.folds < 2 {
            return Err(CliError::Config("folds must be at least 2".into()));
        }
        if config.partitions == 0 || config.workers == 0 {
            return Err(CliError::Config(
                "partitions and workers must be at least 1".into(),
            ));
        }
        if config.federation.nodes == 0 {
            return Err(CliError::Config(
                "federation.nodes must be at least 1".into(),
            ));
        }
        Ok(config)
    }

    /// Architecture with the run seed baked in as the initialization seed.
    pub fn effective_architecture(&self) -> Architecture {
        let mut arch = self.architecture.clone();
        arch.init_seed = self.seed;
        arch
    }

    /// Resolves the dataset schema, loading the manifest when one is named.
    /// Relative manifest paths are taken from the config file's directory.
    pub fn dataset_schema(
        &self,
        config_path: &Path,
    ) -> Result<(CsvSchema, Option<DatasetManifest>), CliError> {
        match &self.dataset {
            DatasetConfig::Inline(schema) => Ok((schema.clone(), None)),
            DatasetConfig::Manifest { manifest } => {
                let path = if manifest.is_absolute() {
                    manifest.clone()
                } else {
                    config_path
                        .parent()
                        .unwrap_or(Path::new("."))
                        .join(manifest)
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("cannot read manifest {}: {e}", path.display()))
                })?;
                let manifest = DatasetManifest::from_json(&text)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok((manifest.schema(), Some(manifest)))
            }
        }
    }
}

/// `key.path=value`: navigates (creating objects as needed) and sets the leaf.
/// The value is parsed as JSON when possible, otherwise taken as a string.
fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<(), CliError> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {entry:?}")))?;
    let value: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        if segment.is_empty() {
            return Err(CliError::Config(format!(
                "--set path {path:?} has an empty segment"
            )));
        }
        let object = cursor
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("--set path {path:?} crosses a non-object")))?;
        if i + 1 == segments.len() {
            object.insert((*segment).to_string(), value);
            return Ok(());
        }
        cursor = object
            .entry((*segment).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}
