//! Experiment configuration: one TOML file drives the whole pipeline.
//! Secrets (API keys) come from environment variables only.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{DatasetLayout, RatingScale};
use crate::error::{Error, Result};
use crate::persona::Variant;
use crate::sampler::TEMPERATURE_MAX;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub persona: PersonaConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// "canonical" (5-point, canonical names) or "source" (mapped names).
    #[serde(default = "default_layout")]
    pub layout: String,
    #[serde(default = "default_scale")]
    pub scale: RatingScale,
    #[serde(default)]
    pub dimension_map: Option<PathBuf>,
    /// Training split for the majority baseline.
    #[serde(default)]
    pub train_path: Option<PathBuf>,
}

fn default_layout() -> String {
    "canonical".to_string()
}

fn default_scale() -> RatingScale {
    RatingScale::FivePoint
}

impl DatasetConfig {
    pub fn dataset_layout(&self) -> Result<DatasetLayout> {
        match self.layout.as_str() {
            "canonical" => Ok(DatasetLayout::canonical()),
            "source" => Ok(DatasetLayout::source(self.scale)),
            other => Err(Error::Config(format!("unknown dataset layout {other:?}"))),
        }
    }
}

/// Exactly one prediction source drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionSource {
    BaselineRandom,
    BaselineMajority,
    File,
    Llm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    pub source: PredictionSource,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

fn default_n_samples() -> usize {
    30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub endpoint: String,
    pub name: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Vec<String>,
}

fn default_max_tokens() -> u32 {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaConfig {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Statement-text overrides, JSON {dimension: text}.
    #[serde(default)]
    pub statements: Option<PathBuf>,
    /// "annotators": one request per annotator profile of the situation.
    /// "resample": draw profiles from the dataset pool with the run seed.
    #[serde(default = "default_profile_source")]
    pub profile_source: String,
}

fn default_variant() -> Variant {
    Variant::Vanilla
}

fn default_profile_source() -> String {
    "annotators".to_string()
}

impl Default for PersonaConfig {
    fn default() -> Self {
        PersonaConfig {
            variant: default_variant(),
            statements: None,
            profile_source: default_profile_source(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calibrator {
    None,
    AvgConf,
    PairRank,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_calibrator")]
    pub method: Calibrator,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_rankings_per_item")]
    pub rankings_per_item: usize,
}

fn default_calibrator() -> Calibrator {
    Calibrator::None
}

fn default_steps() -> usize {
    500
}

fn default_learning_rate() -> f64 {
    0.05
}

fn default_rankings_per_item() -> usize {
    10
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            method: default_calibrator(),
            steps: default_steps(),
            learning_rate: default_learning_rate(),
            rankings_per_item: default_rankings_per_item(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    /// "none", "unimodal" or "bimodal": whether ingest writes smoothed
    /// target distributions alongside the multisets.
    #[serde(default = "default_targets")]
    pub targets: String,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_bimodal_weight")]
    pub bimodal_weight: f64,
}

fn default_targets() -> String {
    "none".to_string()
}

fn default_sigma() -> f64 {
    1.0
}

fn default_bimodal_weight() -> f64 {
    0.7
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            targets: default_targets(),
            sigma: default_sigma(),
            bimodal_weight: default_bimodal_weight(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Profile field for the group-variance table.
    #[serde(default)]
    pub group_by: Option<String>,
    #[serde(default = "default_rank_k")]
    pub rank_k: usize,
    /// Item-score files from runs to compare against this run's item
    /// scores, keyed by condition label.
    #[serde(default)]
    pub compare_runs: Vec<CompareRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRun {
    pub label: String,
    pub item_scores: PathBuf,
}

fn default_rank_k() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_seed() -> u64 {
    17
}

fn default_workers() -> usize {
    1
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".cade-cache")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            workers: default_workers(),
            cache_dir: default_cache_dir(),
            out_dir: default_out_dir(),
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let digest = Sha256::digest(raw.as_bytes());
        let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok((config, hash))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.dataset_layout()?;
        if !self.dataset.path.exists() {
            return Err(Error::Config(format!(
                "dataset path {} does not exist",
                self.dataset.path.display()
            )));
        }
        if let Some(train) = &self.dataset.train_path {
            if !train.exists() {
                return Err(Error::Config(format!(
                    "train path {} does not exist",
                    train.display()
                )));
            }
        }
        if let Some(map) = &self.dataset.dimension_map {
            if !map.exists() {
                return Err(Error::Config(format!(
                    "dimension map {} does not exist",
                    map.display()
                )));
            }
        }
        match self.prediction.source {
            PredictionSource::File => {
                let file = self.prediction.file.as_ref().ok_or_else(|| {
                    Error::Config("prediction.source = \"file\" needs prediction.file".into())
                })?;
                if !file.exists() {
                    return Err(Error::Config(format!(
                        "prediction file {} does not exist",
                        file.display()
                    )));
                }
            }
            PredictionSource::Llm => {
                if self.model.is_none() {
                    return Err(Error::Config(
                        "prediction.source = \"llm\" needs a [model] section".into(),
                    ));
                }
            }
            PredictionSource::BaselineMajority => {
                if self.dataset.train_path.is_none() {
                    return Err(Error::Config(
                        "baseline-majority needs dataset.train_path".into(),
                    ));
                }
            }
            PredictionSource::BaselineRandom => {}
        }
        if let Some(model) = &self.model {
            if let Some(t) = model.temperature {
                if !(0.0..=TEMPERATURE_MAX).contains(&t) {
                    return Err(Error::Config(format!(
                        "temperature {t} outside [0, {TEMPERATURE_MAX}]"
                    )));
                }
            }
            if let Some(grid) = &model.grid {
                if grid.is_empty() {
                    return Err(Error::Config("model.grid is empty".into()));
                }
                for &t in grid {
                    if !(0.0..=TEMPERATURE_MAX).contains(&t) {
                        return Err(Error::Config(format!(
                            "grid temperature {t} outside [0, {TEMPERATURE_MAX}]"
                        )));
                    }
                }
            }
        }
        match self.persona.profile_source.as_str() {
            "annotators" | "resample" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown persona.profile_source {other:?}"
                )))
            }
        }
        match self.smoothing.targets.as_str() {
            "none" | "unimodal" | "bimodal" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown smoothing.targets {other:?}"
                )))
            }
        }
        if self.smoothing.sigma <= 0.0 {
            return Err(Error::Config(format!(
                "smoothing.sigma must be positive, got {}",
                self.smoothing.sigma
            )));
        }
        if !(self.smoothing.bimodal_weight > 0.0 && self.smoothing.bimodal_weight < 1.0) {
            return Err(Error::Config(format!(
                "smoothing.bimodal_weight must lie in (0, 1), got {}",
                self.smoothing.bimodal_weight
            )));
        }
        if let Some(group_by) = &self.analysis.group_by {
            crate::analysis::GroupBy::parse(group_by)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_dataset() -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"situation_id":"s1","text":"t","source_dataset":"EnVent","annotations":[{{"annotator_id":"a1","dimension":"effort","rating":3}}]}}"#
        )
        .unwrap();
        f
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let data = write_dataset();
        let mut cfg = tempfile::NamedTempFile::new().unwrap();
        write!(
            cfg,
            "[dataset]\npath = {:?}\n\n[prediction]\nsource = \"baseline-random\"\n",
            data.path()
        )
        .unwrap();
        let (config, hash) = ExperimentConfig::load(cfg.path()).unwrap();
        assert_eq!(config.prediction.n_samples, 30);
        assert_eq!(config.run.seed, 17);
        assert_eq!(config.persona.variant, Variant::Vanilla);
        assert_eq!(hash.len(), 64);
    }

    #[test]
    fn file_source_requires_existing_file() {
        let data = write_dataset();
        let mut cfg = tempfile::NamedTempFile::new().unwrap();
        write!(
            cfg,
            "[dataset]\npath = {:?}\n\n[prediction]\nsource = \"file\"\nfile = \"missing.jsonl\"\n",
            data.path()
        )
        .unwrap();
        let err = ExperimentConfig::load(cfg.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn temperature_out_of_range_is_config_error() {
        let data = write_dataset();
        let mut cfg = tempfile::NamedTempFile::new().unwrap();
        write!(
            cfg,
            "[dataset]\npath = {:?}\n\n[prediction]\nsource = \"llm\"\n\n[model]\nendpoint = \"http://localhost:1\"\nname = \"m\"\ntemperature = 1.7\n",
            data.path()
        )
        .unwrap();
        let err = ExperimentConfig::load(cfg.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
