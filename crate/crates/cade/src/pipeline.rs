//! End-to-end orchestration: ingest -> (sample | load | baseline) ->
//! calibrate -> eval -> analyze, driven by one experiment config.
//!
//! Every stage reads the prior stage's artifact files and writes its own,
//! so stages can be re-run individually. A manifest records the config
//! hash, seed, stage statuses and artifact list; a run with the same
//! config, cache and dataset reproduces every artifact byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{group_variance, rank_dimensions, GroupBy, SignificanceTable};
use crate::calibration::{
    avg_conf, confidence_elicitation, pair_rank_fit, parse_conf_reply, parse_ranking_reply,
    ranking_elicitation, PairRankOptions, RankingSample,
};
use crate::config::{Calibrator, ExperimentConfig, PredictionSource};
use crate::dataset::{
    build_rating_multisets, parse_records, read_multisets, read_records, write_multisets,
    write_records, AppraisalRecord, DimensionId, DimensionMap, Rating, RatingMultiset,
};
use crate::distributions::{
    modality_census, non_adjacent_ratings, smooth_bimodal, smooth_unimodal,
};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_with_items, load_predictions, random_baseline, read_item_scores, write_item_scores,
    write_predictions, EvalOptions, EvalReport, ItemScore, MajorityBaseline, PredictionSet,
    Provenance,
};
use crate::persona::{build_prompt, PersonaProfile, PromptBundle, StatementSet, Variant};
use crate::sampler::{
    collect, collect_merged, grid_search_temperature, ChatEndpoint, CollectOptions, GridItem,
    GridSearchOutcome, HttpEndpoint, ReplyCache, SampleBatch, SampleRequest, SamplingSpec,
    DEFAULT_GRID,
};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    GridTemp,
    Predict,
    Calibrate,
    Eval,
    Analyze,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GridTemp => "grid-temp",
            Stage::Predict => "predict",
            Stage::Calibrate => "calibrate",
            Stage::Eval => "eval",
            Stage::Analyze => "analyze",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ingest" => Ok(Stage::Ingest),
            "grid-temp" => Ok(Stage::GridTemp),
            "predict" | "sample" => Ok(Stage::Predict),
            "calibrate" => Ok(Stage::Calibrate),
            "eval" => Ok(Stage::Eval),
            "analyze" => Ok(Stage::Analyze),
            other => Err(Error::Config(format!("unknown stage {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub config_hash: String,
}

/// Run manifest, written next to the artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub complete: bool,
    pub stages: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_temperature: Option<f64>,
    /// Combined hash over the sampling batch fingerprints, when sampling
    /// ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_digest: Option<String>,
}

impl Manifest {
    fn new(config_hash: &str, seed: u64) -> Self {
        Manifest {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            complete: false,
            stages: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            selected_temperature: None,
            sampling_digest: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::json(path, e))
    }

    fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    fn record_artifact(&mut self, name: &str, path: &str) {
        self.artifacts.insert(
            name.to_string(),
            ArtifactEntry {
                path: path.to_string(),
                config_hash: self.config_hash.clone(),
            },
        );
    }
}

/// Deterministic child seed for one subsystem.
fn child_seed(master: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// A loaded runtime context shared by the stages.
pub struct Runtime {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub out_dir: PathBuf,
    manifest: Manifest,
    warnings: Vec<String>,
}

impl Runtime {
    pub fn new(config: ExperimentConfig, config_hash: String) -> Result<Self> {
        let out_dir = config.run.out_dir.clone();
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        std::fs::create_dir_all(out_dir.join("analysis"))
            .map_err(|e| Error::io(out_dir.join("analysis"), e))?;
        let manifest_path = out_dir.join("manifest.json");
        let manifest = match Manifest::load(&manifest_path) {
            Ok(existing) if existing.config_hash == config_hash => existing,
            _ => Manifest::new(&config_hash, config.run.seed),
        };
        Ok(Runtime {
            config,
            config_hash,
            out_dir,
            manifest,
            warnings: Vec::new(),
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn require_artifact(
        &self,
        stage: &'static str,
        name: &str,
        produced_by: &'static str,
    ) -> Result<PathBuf> {
        let path = self.artifact(name);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage,
                path,
                produced_by,
            });
        }
        Ok(path)
    }

    fn save_manifest(&self) -> Result<()> {
        self.manifest.save(&self.artifact("manifest.json"))
    }

    fn mark(&mut self, stage: Stage, status: &str) -> Result<()> {
        self.manifest
            .stages
            .insert(stage.name().to_string(), status.to_string());
        self.save_manifest()
    }

    fn endpoint(&self) -> Result<Box<dyn ChatEndpoint>> {
        let model = self
            .config
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("this stage needs a [model] section".into()))?;
        Ok(Box::new(HttpEndpoint::new(
            &model.endpoint,
            model.api_key_env.as_deref(),
        )?))
    }

    fn collect_options(&self) -> CollectOptions {
        let mut opts = CollectOptions {
            workers: self.config.run.workers,
            ..Default::default()
        };
        if let Some(model) = &self.config.model {
            opts.max_tokens = model.max_tokens;
            opts.stop = model.stop.clone();
        }
        opts
    }

    fn statements(&self) -> Result<StatementSet> {
        match &self.config.persona.statements {
            Some(path) => StatementSet::load(path),
            None => Ok(StatementSet::built_in()),
        }
    }

    /// Run one stage, recording its status in the manifest.
    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        self.manifest.complete = false;
        self.mark(stage, "running")?;
        let outcome = match stage {
            Stage::Ingest => self.stage_ingest(),
            Stage::GridTemp => self.stage_grid_temp(),
            Stage::Predict => self.stage_predict(),
            Stage::Calibrate => self.stage_calibrate(),
            Stage::Eval => self.stage_eval(),
            Stage::Analyze => self.stage_analyze(),
        };
        match outcome {
            Ok(()) => {
                self.mark(stage, "complete")?;
                Ok(())
            }
            Err(e) => {
                self.mark(stage, "failed")?;
                Err(Error::stage(stage.name(), e))
            }
        }
    }

    /// Stages a full run of this config executes, in order.
    pub fn planned_stages(&self) -> Vec<Stage> {
        let mut stages = vec![Stage::Ingest];
        let grid_needed = self.config.prediction.source == PredictionSource::Llm
            && self
                .config
                .model
                .as_ref()
                .is_some_and(|m| m.temperature.is_none());
        if grid_needed {
            stages.push(Stage::GridTemp);
        }
        if self.config.calibration.method == Calibrator::None {
            stages.push(Stage::Predict);
        } else {
            stages.push(Stage::Calibrate);
        }
        stages.push(Stage::Eval);
        stages.push(Stage::Analyze);
        stages
    }

    /// Execute the full pipeline, optionally stopping after one stage.
    pub fn run(&mut self, upto: Option<Stage>) -> Result<()> {
        let stages = self.planned_stages();
        for stage in stages {
            self.run_stage(stage)?;
            if Some(stage) == upto {
                break;
            }
        }
        if upto.is_none() {
            self.manifest.complete = true;
            self.save_manifest()?;
        }
        Ok(())
    }

    // ---- ingest ----------------------------------------------------------

    fn stage_ingest(&mut self) -> Result<()> {
        let map = match &self.config.dataset.dimension_map {
            Some(path) => DimensionMap::load_overrides(path)?,
            None => DimensionMap::built_in(),
        };
        let layout = self.config.dataset.dataset_layout()?;
        let outcome = parse_records(&self.config.dataset.path, &layout, &map)?;

        for (name, count) in &outcome.dropped_dimensions {
            self.warnings.push(format!(
                "dropped {count} annotation(s) of unmapped dimension {name:?}"
            ));
        }
        if !outcome.rejects.is_empty() {
            self.warnings.push(format!(
                "{} row(s) rejected, see rejects.jsonl",
                outcome.rejects.len()
            ));
        }

        write_records(&self.artifact("records.jsonl"), &outcome.records)?;
        outcome.write_rejects(&self.artifact("rejects.jsonl"))?;
        let multisets = build_rating_multisets(&outcome.records);
        write_multisets(&self.artifact("multisets.jsonl"), &multisets)?;
        self.manifest.record_artifact("records", "records.jsonl");
        self.manifest.record_artifact("rejects", "rejects.jsonl");
        self.manifest
            .record_artifact("multisets", "multisets.jsonl");

        if self.config.smoothing.targets != "none" {
            self.write_smoothed_targets(&multisets)?;
        }
        self.save_manifest()
    }

    fn write_smoothed_targets(&mut self, multisets: &[RatingMultiset]) -> Result<()> {
        #[derive(Serialize)]
        struct TargetRow<'a> {
            situation_id: &'a str,
            dimension: DimensionId,
            pmf: [f64; 5],
        }

        let sigma = self.config.smoothing.sigma;
        let weight = self.config.smoothing.bimodal_weight;
        let bimodal = self.config.smoothing.targets == "bimodal";
        let mut rng =
            ChaCha12Rng::seed_from_u64(child_seed(self.config.run.seed, "bimodal-second-mode"));

        let path = self.artifact("smoothed_targets.jsonl");
        let mut lines = String::new();
        for m in multisets {
            // ground-truth center: modal rating, ties toward the smaller
            let counts = m.counts();
            let mut best = 0usize;
            for i in 1..5 {
                if counts[i] > counts[best] {
                    best = i;
                }
            }
            let center = Rating::new(best as u8 + 1).unwrap();
            let target = if bimodal {
                let choices = non_adjacent_ratings(center);
                let second = choices[rng.random_range(0..choices.len())];
                smooth_bimodal(center, second, sigma, weight)?
            } else {
                smooth_unimodal(center, sigma)?
            };
            let row = TargetRow {
                situation_id: &m.situation_id,
                dimension: m.dimension,
                pmf: *target.pmf(),
            };
            lines.push_str(&serde_json::to_string(&row).map_err(|e| Error::json(&path, e))?);
            lines.push('\n');
        }
        std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
        self.manifest
            .record_artifact("smoothed_targets", "smoothed_targets.jsonl");
        Ok(())
    }

    // ---- prompts ---------------------------------------------------------

    fn load_inputs(
        &self,
        stage: &'static str,
    ) -> Result<(Vec<AppraisalRecord>, Vec<RatingMultiset>)> {
        let records_path = self.require_artifact(stage, "records.jsonl", "ingest")?;
        let multisets_path = self.require_artifact(stage, "multisets.jsonl", "ingest")?;
        Ok((
            read_records(&records_path)?,
            read_multisets(&multisets_path)?,
        ))
    }

    /// Prompt jobs for one (situation, dimension) item under the configured
    /// variant; incomplete profiles fall back to vanilla with a warning.
    fn item_prompts(
        &mut self,
        record: &AppraisalRecord,
        dimension: DimensionId,
        statements: &StatementSet,
        n_samples: usize,
        profile_pool: &[&PersonaProfile],
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<PromptBundle>> {
        let statement = statements.get(dimension);
        let variant = self.config.persona.variant;
        if variant == Variant::Vanilla {
            return Ok(vec![build_prompt(&record.text, statement, None, variant)?]);
        }

        let profiles: Vec<&PersonaProfile> = match self.config.persona.profile_source.as_str() {
            "annotators" => {
                let mut ids: Vec<&String> = record.profiles.keys().collect();
                ids.sort();
                ids.iter().map(|id| &record.profiles[*id]).collect()
            }
            _ => {
                // resample from the dataset-wide pool
                (0..n_samples)
                    .map(|_| profile_pool[rng.random_range(0..profile_pool.len())])
                    .collect()
            }
        };

        if profiles.is_empty() {
            self.warnings.push(format!(
                "situation {} has no profiles; falling back to vanilla",
                record.situation_id
            ));
            return Ok(vec![build_prompt(&record.text, statement, None, variant)?]);
        }

        let mut bundles = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let profile = profiles[i % profiles.len()];
            match build_prompt(&record.text, statement, Some(profile), variant) {
                Ok(bundle) => bundles.push(bundle),
                Err(Error::IncompleteProfile { missing }) => {
                    self.warnings.push(format!(
                        "situation {}: profile missing {missing}; falling back to vanilla",
                        record.situation_id
                    ));
                    bundles.push(build_prompt(
                        &record.text,
                        statement,
                        None,
                        Variant::Vanilla,
                    )?);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(bundles)
    }

    // ---- grid-temp -------------------------------------------------------

    fn stage_grid_temp(&mut self) -> Result<()> {
        let (records, multisets) = self.load_inputs("grid-temp")?;
        let model = self
            .config
            .model
            .clone()
            .ok_or_else(|| Error::Config("grid-temp needs a [model] section".into()))?;
        let grid = model.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
        let statements = self.statements()?;

        let by_situation: BTreeMap<&str, &AppraisalRecord> = records
            .iter()
            .map(|r| (r.situation_id.as_str(), r))
            .collect();
        let mut items = Vec::with_capacity(multisets.len());
        for m in &multisets {
            let record = by_situation.get(m.situation_id.as_str()).ok_or_else(|| {
                Error::Config(format!("multiset {} has no record", m.situation_id))
            })?;
            // the grid search uses the vanilla prompt; persona sampling
            // happens in the predict stage at the selected temperature
            let prompt = build_prompt(
                &record.text,
                statements.get(m.dimension),
                None,
                Variant::Vanilla,
            )?;
            items.push(GridItem {
                prompt,
                truth: m.clone(),
            });
        }

        let cache = ReplyCache::open(&self.config.run.cache_dir)?;
        let endpoint = self.endpoint()?;
        let outcome = grid_search_temperature(
            &items,
            &SamplingSpec {
                model_name: model.name.clone(),
                n: self.config.prediction.n_samples,
            },
            &grid,
            endpoint.as_ref(),
            &cache,
            &self.collect_options(),
        )?;

        self.write_grid_outcome(&outcome)
    }

    fn write_grid_outcome(&mut self, outcome: &GridSearchOutcome) -> Result<()> {
        let path = self.artifact("grid_table.csv");
        std::fs::write(&path, outcome.to_csv()).map_err(|e| Error::io(&path, e))?;
        self.manifest
            .record_artifact("grid_table", "grid_table.csv");
        self.manifest.selected_temperature = Some(outcome.selected_temperature);
        self.save_manifest()
    }

    /// The sampling temperature: explicit config wins, then a prior
    /// grid-temp selection from the manifest.
    fn sampling_temperature(&self) -> Result<f64> {
        if let Some(model) = &self.config.model {
            if let Some(t) = model.temperature {
                return Ok(t);
            }
        }
        self.manifest.selected_temperature.ok_or_else(|| {
            Error::Config(
                "no temperature configured and no grid-temp selection in the manifest".into(),
            )
        })
    }

    // ---- predict ---------------------------------------------------------

    fn stage_predict(&mut self) -> Result<()> {
        let (records, multisets) = self.load_inputs("predict")?;
        let keys: Vec<(String, DimensionId)> = multisets.iter().map(|m| m.key()).collect();

        let preds = match self.config.prediction.source {
            PredictionSource::BaselineRandom => random_baseline(
                &keys,
                self.config.prediction.n_samples,
                child_seed(self.config.run.seed, "random-baseline"),
            ),
            PredictionSource::BaselineMajority => {
                let train_path = self.config.dataset.train_path.clone().ok_or_else(|| {
                    Error::Config("baseline-majority needs dataset.train_path".into())
                })?;
                let map = match &self.config.dataset.dimension_map {
                    Some(path) => DimensionMap::load_overrides(path)?,
                    None => DimensionMap::built_in(),
                };
                let layout = self.config.dataset.dataset_layout()?;
                let train = parse_records(&train_path, &layout, &map)?;
                let train_multisets = build_rating_multisets(&train.records);
                MajorityBaseline::fit(&train_multisets)?.predict(&keys)?
            }
            PredictionSource::File => {
                let file = self
                    .config
                    .prediction
                    .file
                    .clone()
                    .ok_or_else(|| Error::Config("prediction.file missing".into()))?;
                load_predictions(&file)?
            }
            PredictionSource::Llm => self.sample_predictions(&records, &multisets)?,
        };

        write_predictions(&self.artifact("predictions.jsonl"), &preds)?;
        self.manifest
            .record_artifact("predictions", "predictions.jsonl");
        self.save_manifest()
    }

    fn sample_predictions(
        &mut self,
        records: &[AppraisalRecord],
        multisets: &[RatingMultiset],
    ) -> Result<PredictionSet> {
        let model = self
            .config
            .model
            .clone()
            .ok_or_else(|| Error::Config("sampling needs a [model] section".into()))?;
        let temperature = self.sampling_temperature()?;
        let n_samples = self.config.prediction.n_samples;
        let statements = self.statements()?;
        let cache = ReplyCache::open(&self.config.run.cache_dir)?;
        let endpoint = self.endpoint()?;
        let opts = self.collect_options();

        let by_situation: BTreeMap<&str, &AppraisalRecord> = records
            .iter()
            .map(|r| (r.situation_id.as_str(), r))
            .collect();
        let profile_pool: Vec<&PersonaProfile> =
            records.iter().flat_map(|r| r.profiles.values()).collect();
        let mut rng =
            ChaCha12Rng::seed_from_u64(child_seed(self.config.run.seed, "profile-resample"));

        let mut jobs: Vec<Vec<SampleRequest>> = Vec::with_capacity(multisets.len());
        for m in multisets {
            let record = by_situation.get(m.situation_id.as_str()).ok_or_else(|| {
                Error::Config(format!("multiset {} has no record", m.situation_id))
            })?;
            let prompts = self.item_prompts(
                record,
                m.dimension,
                &statements,
                n_samples,
                &profile_pool,
                &mut rng,
            )?;
            let per_prompt = if prompts.len() == 1 {
                vec![SampleRequest {
                    prompt: prompts[0].clone(),
                    temperature,
                    n: n_samples,
                    model_name: model.name.clone(),
                }]
            } else {
                // distinct prompts become one request each; repeated
                // profiles fold into a higher sample count so every reply
                // keeps a unique cache index
                let mut grouped: BTreeMap<(String, String), (PromptBundle, usize)> =
                    BTreeMap::new();
                for prompt in prompts {
                    grouped
                        .entry((prompt.system.clone(), prompt.user.clone()))
                        .or_insert((prompt, 0))
                        .1 += 1;
                }
                grouped
                    .into_values()
                    .map(|(prompt, n)| SampleRequest {
                        prompt,
                        temperature,
                        n,
                        model_name: model.name.clone(),
                    })
                    .collect()
            };
            jobs.push(per_prompt);
        }

        let batches = run_item_jobs(&jobs, endpoint.as_ref(), &cache, &opts)?;
        let mut digest = Sha256::new();
        let mut preds = PredictionSet::new(Provenance::LlmSamples);
        for (m, batch) in multisets.iter().zip(&batches) {
            digest.update(batch.fingerprint.as_bytes());
            preds.insert(m.situation_id.clone(), m.dimension, batch.distribution()?);
        }
        self.manifest.sampling_digest = Some(
            digest
                .finalize()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
        );
        Ok(preds)
    }

    // ---- calibrate -------------------------------------------------------

    fn stage_calibrate(&mut self) -> Result<()> {
        let (records, multisets) = self.load_inputs("calibrate")?;
        let method = self.config.calibration.method;
        if method == Calibrator::None {
            return Err(Error::Config("calibration.method is \"none\"".into()));
        }
        let model = self
            .config
            .model
            .clone()
            .ok_or_else(|| Error::Config("calibrate needs a [model] section".into()))?;
        let temperature = self.sampling_temperature()?;
        let statements = self.statements()?;
        let cache = ReplyCache::open(&self.config.run.cache_dir)?;
        let endpoint = self.endpoint()?;
        let opts = self.collect_options();

        let by_situation: BTreeMap<&str, &AppraisalRecord> = records
            .iter()
            .map(|r| (r.situation_id.as_str(), r))
            .collect();

        let n = match method {
            Calibrator::AvgConf => self.config.prediction.n_samples,
            Calibrator::PairRank => self.config.calibration.rankings_per_item,
            Calibrator::None => unreachable!(),
        };

        let mut digest = Sha256::new();
        let mut preds = PredictionSet::new(match method {
            Calibrator::AvgConf => Provenance::AvgConf,
            Calibrator::PairRank => Provenance::PairRank,
            Calibrator::None => unreachable!(),
        });
        for m in &multisets {
            let record = by_situation.get(m.situation_id.as_str()).ok_or_else(|| {
                Error::Config(format!("multiset {} has no record", m.situation_id))
            })?;
            let base = build_prompt(
                &record.text,
                statements.get(m.dimension),
                None,
                Variant::Vanilla,
            )?;
            let prompt = match method {
                Calibrator::AvgConf => confidence_elicitation(&base),
                Calibrator::PairRank => ranking_elicitation(&base),
                Calibrator::None => unreachable!(),
            };
            let req = SampleRequest {
                prompt,
                temperature,
                n,
                model_name: model.name.clone(),
            };
            let batch = collect(&req, endpoint.as_ref(), &cache, &opts)?;
            digest.update(batch.fingerprint.as_bytes());

            let d = match method {
                Calibrator::AvgConf => {
                    let mut samples = Vec::new();
                    for raw in &batch.raw_replies {
                        if let Ok(s) = parse_conf_reply(raw) {
                            samples.push(s);
                        }
                    }
                    avg_conf(&samples)?
                }
                Calibrator::PairRank => {
                    let mut rankings: Vec<RankingSample> = Vec::new();
                    for raw in &batch.raw_replies {
                        if let Ok(r) = parse_ranking_reply(raw) {
                            rankings.push(r);
                        }
                    }
                    let fit = pair_rank_fit(
                        &rankings,
                        &PairRankOptions {
                            steps: self.config.calibration.steps,
                            learning_rate: self.config.calibration.learning_rate,
                            ..Default::default()
                        },
                    )?;
                    if !fit.converged {
                        self.warnings.push(format!(
                            "pair-rank fit for ({}, {}) had not converged after {} steps",
                            m.situation_id, m.dimension, fit.steps_taken
                        ));
                    }
                    fit.distribution
                }
                Calibrator::None => unreachable!(),
            };
            preds.insert(m.situation_id.clone(), m.dimension, d);
        }

        self.manifest.sampling_digest = Some(
            digest
                .finalize()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
        );
        write_predictions(&self.artifact("predictions.jsonl"), &preds)?;
        self.manifest
            .record_artifact("predictions", "predictions.jsonl");
        self.save_manifest()
    }

    // ---- eval ------------------------------------------------------------

    fn stage_eval(&mut self) -> Result<()> {
        let multisets_path = self.require_artifact("eval", "multisets.jsonl", "ingest")?;
        let preds_path =
            self.require_artifact("eval", "predictions.jsonl", "predict or calibrate")?;
        let multisets = read_multisets(&multisets_path)?;
        let preds = load_predictions(&preds_path)?;
        let (report, items) = evaluate_with_items(
            &preds,
            &multisets,
            &EvalOptions {
                workers: self.config.run.workers,
                ..Default::default()
            },
        )?;

        report.write_json(&self.artifact("eval_report.json"))?;
        let text_path = self.artifact("eval_report.txt");
        std::fs::write(&text_path, report.to_text_table()).map_err(|e| Error::io(&text_path, e))?;
        write_item_scores(&self.artifact("item_scores.jsonl"), &items)?;
        self.manifest
            .record_artifact("eval_report_json", "eval_report.json");
        self.manifest
            .record_artifact("eval_report_text", "eval_report.txt");
        self.manifest
            .record_artifact("item_scores", "item_scores.jsonl");
        self.save_manifest()
    }

    // ---- analyze ---------------------------------------------------------

    fn stage_analyze(&mut self) -> Result<()> {
        let report_path = self.require_artifact("analyze", "eval_report.json", "eval")?;
        let report = EvalReport::read_json(&report_path)?;

        // best / worst modeled dimensions
        let k = self.config.analysis.rank_k.min(report.per_dimension.len());
        let (top, bottom) = rank_dimensions(&report, k)?;
        #[derive(Serialize)]
        struct Ranks {
            k: usize,
            top: Vec<String>,
            bottom: Vec<String>,
        }
        let ranks = Ranks {
            k,
            top: top.iter().map(|d| d.name().to_string()).collect(),
            bottom: bottom.iter().map(|d| d.name().to_string()).collect(),
        };
        let ranks_path = self.artifact("analysis/dimension_ranks.json");
        let json = serde_json::to_string_pretty(&ranks).map_err(|e| Error::json(&ranks_path, e))?;
        std::fs::write(&ranks_path, json + "\n").map_err(|e| Error::io(&ranks_path, e))?;
        self.manifest
            .record_artifact("dimension_ranks", "analysis/dimension_ranks.json");

        // modality census of the human ratings
        let multisets_path = self.require_artifact("analyze", "multisets.jsonl", "ingest")?;
        let multisets = read_multisets(&multisets_path)?;
        let census = modality_census(&multisets);
        let mut csv = String::from("dimension,unimodal,bimodal,trimodal,quadmodal,pentamodal\n");
        for (dim, counts) in &census {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                dim.name(),
                counts[0],
                counts[1],
                counts[2],
                counts[3],
                counts[4]
            ));
        }
        let census_path = self.artifact("analysis/modality_census.csv");
        std::fs::write(&census_path, csv).map_err(|e| Error::io(&census_path, e))?;
        self.manifest
            .record_artifact("modality_census", "analysis/modality_census.csv");

        // per-group appraisal variance
        if let Some(group_by) = &self.config.analysis.group_by {
            let records_path = self.require_artifact("analyze", "records.jsonl", "ingest")?;
            let records = read_records(&records_path)?;
            let table = group_variance(&records, &GroupBy::parse(group_by)?)?;
            let csv_path = self.artifact("analysis/group_variance.csv");
            std::fs::write(&csv_path, table.to_long_csv()).map_err(|e| Error::io(&csv_path, e))?;
            let json_path = self.artifact("analysis/group_variance.json");
            let json =
                serde_json::to_string_pretty(&table).map_err(|e| Error::json(&json_path, e))?;
            std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
            self.manifest
                .record_artifact("group_variance_csv", "analysis/group_variance.csv");
            self.manifest
                .record_artifact("group_variance_json", "analysis/group_variance.json");
        }

        // significance against other runs
        if !self.config.analysis.compare_runs.is_empty() {
            let items_path = self.require_artifact("analyze", "item_scores.jsonl", "eval")?;
            let baseline = per_dimension_scores(&read_item_scores(&items_path)?);
            let mut conditions = BTreeMap::new();
            for compare in &self.config.analysis.compare_runs {
                let scores = read_item_scores(&compare.item_scores)?;
                conditions.insert(compare.label.clone(), per_dimension_scores(&scores));
            }
            let table = SignificanceTable::build(&baseline, &conditions)?;
            let csv_path = self.artifact("analysis/significance.csv");
            std::fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
            let json_path = self.artifact("analysis/significance.json");
            let json =
                serde_json::to_string_pretty(&table).map_err(|e| Error::json(&json_path, e))?;
            std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
            self.manifest
                .record_artifact("significance_csv", "analysis/significance.csv");
            self.manifest
                .record_artifact("significance_json", "analysis/significance.json");
        }

        self.save_manifest()
    }
}

/// Per-situation Wasserstein samples grouped by dimension.
fn per_dimension_scores(items: &[ItemScore]) -> BTreeMap<DimensionId, Vec<f64>> {
    let mut sorted: Vec<&ItemScore> = items.iter().collect();
    sorted.sort_by(|a, b| (&a.situation_id, a.dimension).cmp(&(&b.situation_id, b.dimension)));
    let mut out: BTreeMap<DimensionId, Vec<f64>> = BTreeMap::new();
    for item in sorted {
        out.entry(item.dimension)
            .or_default()
            .push(item.wasserstein);
    }
    out
}

/// Run per-item sampling jobs with bounded parallelism. Each job is one or
/// more requests merged into a single batch; results keep item order.
fn run_item_jobs(
    jobs: &[Vec<SampleRequest>],
    endpoint: &dyn ChatEndpoint,
    cache: &ReplyCache,
    opts: &CollectOptions,
) -> Result<Vec<SampleBatch>> {
    let run_one = |job: &Vec<SampleRequest>| -> Result<SampleBatch> {
        if job.len() == 1 {
            collect(&job[0], endpoint, cache, opts)
        } else {
            collect_merged(job, endpoint, cache, opts)
        }
    };

    let workers = opts.workers.max(1);
    if workers == 1 || jobs.len() < 2 {
        return jobs.iter().map(run_one).collect();
    }
    let mut slots: Vec<Option<Result<SampleBatch>>> = Vec::new();
    slots.resize_with(jobs.len(), || None);
    let slots = std::sync::Mutex::new(slots);
    let cursor = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = run_one(&jobs[i]);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every job processed"))
        .collect()
}
