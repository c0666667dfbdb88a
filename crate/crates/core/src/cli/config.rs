//! Run configuration: a TOML file with `[paths]`, `[prompt]`, `[backend]`
//! and `[pipeline]` tables, overridable from the command line.
//!
//! ```toml
//! [paths]
//! notes = "notes.jsonl"
//! diagnoses = "diagnoses.jsonl"
//! output_dir = "out"
//!
//! [prompt]
//! mode = "few_shot"
//! shots_total = 3
//! seed = 7
//!
//! [backend]
//! kind = "http_chat"
//! base_url = "http://127.0.0.1:8000/v1"
//! model_name = "qwen2-7b-instruct"
//!
//! [pipeline]
//! preprocessing = "on"
//! windows = [10, 15, 20]
//! granularities = ["patient", "admission"]
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::corpus::{Granularity, IcdPrefixes};
use crate::extract::DEFAULT_RADIUS;
use crate::llm::BackendConfig;
use crate::prompt::PromptSpec;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub notes: Option<PathBuf>,
    pub diagnoses: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub example_pool: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub zero_shot_template: Option<PathBuf>,
    pub few_shot_template: Option<PathBuf>,
}

impl PathsConfig {
    fn resolve_against(&mut self, base: &Path) {
        for slot in [
            &mut self.notes,
            &mut self.diagnoses,
            &mut self.lexicon,
            &mut self.example_pool,
            &mut self.output_dir,
            &mut self.zero_shot_template,
            &mut self.few_shot_template,
        ] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preprocessing {
    On,
    Off,
}

impl Preprocessing {
    pub fn is_on(self) -> bool {
        self == Self::On
    }
}

impl FromStr for Preprocessing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "on" | "true" | "yes" => Ok(Self::On),
            "off" | "false" | "no" => Ok(Self::Off),
            other => Err(format!("preprocessing must be on or off, got {other:?}")),
        }
    }
}

fn default_windows() -> Vec<u32> {
    vec![10, 15, 20]
}

fn default_granularities() -> Vec<Granularity> {
    vec![Granularity::Patient, Granularity::Admission]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "PipelineConfig::default_preprocessing")]
    pub preprocessing: Preprocessing,
    #[serde(default = "PipelineConfig::default_radius")]
    pub radius: usize,
    /// Window half-widths in days.
    #[serde(default = "default_windows")]
    pub windows: Vec<u32>,
    #[serde(default = "default_granularities")]
    pub granularities: Vec<Granularity>,
    #[serde(default)]
    pub icd: IcdPrefixes,
}

impl PipelineConfig {
    fn default_preprocessing() -> Preprocessing {
        Preprocessing::On
    }

    fn default_radius() -> usize {
        DEFAULT_RADIUS
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocessing: Preprocessing::On,
            radius: DEFAULT_RADIUS,
            windows: default_windows(),
            granularities: default_granularities(),
            icd: IcdPrefixes::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub prompt: PromptSpec,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn parse(source: &str) -> Result<Self, CliError> {
        toml::from_str(source).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&source)
            .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.paths.resolve_against(base);
        Ok(config)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("pheno-out"))
    }

    pub fn notes_path(&self) -> Result<&Path, CliError> {
        self.paths
            .notes
            .as_deref()
            .ok_or_else(|| CliError::config("no notes file configured (paths.notes or --notes)"))
    }

    pub fn diagnoses_path(&self) -> Result<&Path, CliError> {
        self.paths
            .diagnoses
            .as_deref()
            .ok_or_else(|| CliError::config("no diagnoses file configured (paths.diagnoses or --diagnoses)"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.prompt.validate().map_err(CliError::config)?;
        self.backend.validate().map_err(CliError::config)?;
        if self.pipeline.windows.is_empty() {
            return Err(CliError::config("pipeline.windows is empty"));
        }
        if self.pipeline.granularities.is_empty() {
            return Err(CliError::config("pipeline.granularities is empty"));
        }
        Ok(())
    }
}
