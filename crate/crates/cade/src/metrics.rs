//! Scoring of predicted rating distributions against human sample
//! distributions, plus the Random and Majority reference predictors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DimensionId, Rating, RatingMultiset};
use crate::distributions::{
    empirical_distribution, sample_variance, wasserstein1, RatingDistribution,
};
use crate::error::{Error, Result};

/// Where a set of predictions came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    LlmSamples,
    PredictionFile,
    Baseline,
    AvgConf,
    PairRank,
}

/// Predicted distribution per (situation, dimension).
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub entries: BTreeMap<(String, DimensionId), RatingDistribution>,
    pub provenance: Provenance,
}

impl PredictionSet {
    pub fn new(provenance: Provenance) -> Self {
        PredictionSet {
            entries: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(
        &mut self,
        situation_id: impl Into<String>,
        dimension: DimensionId,
        d: RatingDistribution,
    ) {
        self.entries.insert((situation_id.into(), dimension), d);
    }

    pub fn get(&self, situation_id: &str, dimension: DimensionId) -> Option<&RatingDistribution> {
        self.entries.get(&(situation_id.to_string(), dimension))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Wasserstein distance, mean-MAE and variance-MAE for one scope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub wasserstein: f64,
    pub mu_mae: f64,
    /// Absent when no item in scope had enough ratings for variance
    /// scoring.
    pub var_mae: Option<f64>,
}

/// Scores per dimension plus the unweighted cross-dimension aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_dimension: BTreeMap<DimensionId, MetricTriple>,
    pub aggregate: MetricTriple,
    pub n_items: usize,
    /// Items skipped for variance scoring because they carry a single
    /// rating.
    pub variance_skipped: usize,
}

/// Per-item scores, kept for significance testing across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemScore {
    pub situation_id: String,
    pub dimension: DimensionId,
    pub wasserstein: f64,
    pub mu_mae: f64,
    pub var_mae: Option<f64>,
}

/// How per-dimension values are combined into the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionWeighting {
    /// Every dimension counts once, regardless of item count.
    Unweighted,
    /// Dimensions weighted by their item counts.
    ItemWeighted,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub workers: usize,
    pub weighting: DimensionWeighting,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            workers: 1,
            weighting: DimensionWeighting::Unweighted,
        }
    }
}

type RawScore = (f64, f64, Option<f64>);

fn score_item(pred: &RatingDistribution, truth: &RatingMultiset) -> Result<RawScore> {
    let human = empirical_distribution(truth)?;
    let w = wasserstein1(pred, &human);
    // the human mean is read off the same empirical pmf that the
    // Wasserstein term uses, so a prediction equal to the empirical
    // distribution scores exactly zero
    let mu = (pred.mean() - human.mean()).abs();
    let var = if truth.len() >= 2 {
        Some((pred.variance() - sample_variance(truth)?).abs())
    } else {
        None
    };
    Ok((w, mu, var))
}

/// Score a prediction set against ground-truth multisets.
///
/// Per item: Wasserstein-1 against the empirical human distribution,
/// absolute error of the mean, and absolute error of the variance (the
/// human side uses the unbiased sample variance; items with one rating are
/// skipped for variance and counted). Dimension scores are item means; the
/// aggregate is the unweighted dimension mean.
pub fn evaluate(
    preds: &PredictionSet,
    truth: &[RatingMultiset],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let (report, _) = evaluate_with_items(preds, truth, opts)?;
    Ok(report)
}

/// Like [`evaluate`], additionally returning per-item scores in a fixed
/// order (sorted by situation then dimension).
pub fn evaluate_with_items(
    preds: &PredictionSet,
    truth: &[RatingMultiset],
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<ItemScore>)> {
    // fixed processing order so reductions do not depend on input order
    let mut ordered: Vec<&RatingMultiset> = truth.iter().collect();
    ordered.sort_by(|a, b| (&a.situation_id, a.dimension).cmp(&(&b.situation_id, b.dimension)));

    for m in &ordered {
        if preds.get(&m.situation_id, m.dimension).is_none() {
            return Err(Error::MissingPrediction {
                situation_id: m.situation_id.clone(),
                dimension: m.dimension,
            });
        }
    }

    let workers = opts.workers.max(1);
    let scored: Vec<Result<RawScore>> = if workers == 1 || ordered.len() < 2 {
        ordered
            .iter()
            .map(|m| score_item(preds.get(&m.situation_id, m.dimension).unwrap(), m))
            .collect()
    } else {
        let mut slots: Vec<Option<Result<RawScore>>> = Vec::new();
        slots.resize_with(ordered.len(), || None);
        let slots = std::sync::Mutex::new(slots);
        let cursor = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(ordered.len()) {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= ordered.len() {
                        break;
                    }
                    let m = ordered[i];
                    let out = score_item(preds.get(&m.situation_id, m.dimension).unwrap(), m);
                    slots.lock().unwrap()[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|slot| slot.expect("every item scored"))
            .collect()
    };

    let mut items = Vec::with_capacity(ordered.len());
    for (m, scored) in ordered.iter().zip(scored) {
        let (w, mu, var) = scored?;
        items.push(ItemScore {
            situation_id: m.situation_id.clone(),
            dimension: m.dimension,
            wasserstein: w,
            mu_mae: mu,
            var_mae: var,
        });
    }

    let report = reduce_items(&items, opts.weighting);
    Ok((report, items))
}

fn reduce_items(items: &[ItemScore], weighting: DimensionWeighting) -> EvalReport {
    #[derive(Default)]
    struct Acc {
        w: f64,
        mu: f64,
        n: usize,
        var: f64,
        var_n: usize,
    }

    let mut dims: BTreeMap<DimensionId, Acc> = BTreeMap::new();
    let mut variance_skipped = 0;
    for item in items {
        let acc = dims.entry(item.dimension).or_default();
        acc.w += item.wasserstein;
        acc.mu += item.mu_mae;
        acc.n += 1;
        match item.var_mae {
            Some(v) => {
                acc.var += v;
                acc.var_n += 1;
            }
            None => variance_skipped += 1,
        }
    }

    let mut per_dimension = BTreeMap::new();
    for (&dim, acc) in &dims {
        per_dimension.insert(
            dim,
            MetricTriple {
                wasserstein: acc.w / acc.n as f64,
                mu_mae: acc.mu / acc.n as f64,
                var_mae: (acc.var_n > 0).then(|| acc.var / acc.var_n as f64),
            },
        );
    }

    let aggregate = match weighting {
        DimensionWeighting::Unweighted => {
            let n_dims = per_dimension.len().max(1) as f64;
            let w = per_dimension.values().map(|t| t.wasserstein).sum::<f64>() / n_dims;
            let mu = per_dimension.values().map(|t| t.mu_mae).sum::<f64>() / n_dims;
            let with_var: Vec<f64> = per_dimension.values().filter_map(|t| t.var_mae).collect();
            let var = (!with_var.is_empty())
                .then(|| with_var.iter().sum::<f64>() / with_var.len() as f64);
            MetricTriple {
                wasserstein: w,
                mu_mae: mu,
                var_mae: var,
            }
        }
        DimensionWeighting::ItemWeighted => {
            let n = items.len().max(1) as f64;
            let w = items.iter().map(|i| i.wasserstein).sum::<f64>() / n;
            let mu = items.iter().map(|i| i.mu_mae).sum::<f64>() / n;
            let vars: Vec<f64> = items.iter().filter_map(|i| i.var_mae).collect();
            let var = (!vars.is_empty()).then(|| vars.iter().sum::<f64>() / vars.len() as f64);
            MetricTriple {
                wasserstein: w,
                mu_mae: mu,
                var_mae: var,
            }
        }
    };

    EvalReport {
        per_dimension,
        aggregate,
        n_items: items.len(),
        variance_skipped,
    }
}

/// Uniform-sampling reference predictor.
///
/// Each key gets the empirical distribution of `n_samples` uniform draws
/// from the scale. Keys are sorted before drawing, so the result depends
/// only on the key set and the seed.
pub fn random_baseline(
    keys: &[(String, DimensionId)],
    n_samples: usize,
    seed: u64,
) -> PredictionSet {
    let mut sorted: Vec<&(String, DimensionId)> = keys.iter().collect();
    sorted.sort();
    sorted.dedup();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut set = PredictionSet::new(Provenance::Baseline);
    for (sid, dim) in sorted {
        let mut counts = [0u32; 5];
        for _ in 0..n_samples.max(1) {
            let r: u8 = rng.random_range(1..=5);
            counts[usize::from(r - 1)] += 1;
        }
        set.insert(
            sid.clone(),
            *dim,
            RatingDistribution::from_counts(counts).unwrap(),
        );
    }
    set
}

/// Modal-rating reference predictor fitted on training multisets.
///
/// Pools all training ratings per dimension and predicts a point mass at
/// the modal rating, ties broken toward the smaller rating.
#[derive(Debug, Clone)]
pub struct MajorityBaseline {
    modes: BTreeMap<DimensionId, Rating>,
}

impl MajorityBaseline {
    pub fn fit(train: &[RatingMultiset]) -> Result<Self> {
        let mut counts: BTreeMap<DimensionId, [u64; 5]> = BTreeMap::new();
        for m in train {
            let acc = counts.entry(m.dimension).or_insert([0; 5]);
            for r in &m.ratings {
                acc[r.index()] += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut modes = BTreeMap::new();
        for (dim, acc) in counts {
            let mut best = 0usize;
            for i in 1..5 {
                if acc[i] > acc[best] {
                    best = i;
                }
            }
            modes.insert(dim, Rating::new(best as u8 + 1).unwrap());
        }
        Ok(MajorityBaseline { modes })
    }

    pub fn mode(&self, dimension: DimensionId) -> Option<Rating> {
        self.modes.get(&dimension).copied()
    }

    pub fn predict(&self, keys: &[(String, DimensionId)]) -> Result<PredictionSet> {
        let mut set = PredictionSet::new(Provenance::Baseline);
        for (sid, dim) in keys {
            let mode = self
                .modes
                .get(dim)
                .copied()
                .ok_or(Error::DimensionNotInTraining(*dim))?;
            set.insert(sid.clone(), *dim, RatingDistribution::point_mass(mode));
        }
        Ok(set)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    situation_id: String,
    dimension: DimensionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pmf: Option<[f64; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Load predictions from JSONL.
///
/// Each row carries either `pmf` (five probabilities) or `samples`
/// (individual ratings converted to an empirical distribution). This is
/// the bridge format for externally fine-tuned models.
pub fn load_predictions(path: &Path) -> Result<PredictionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut set = PredictionSet::new(Provenance::PredictionFile);
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PredictionRow = serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
        let d = match (row.pmf, &row.samples) {
            (Some(pmf), None) => RatingDistribution::from_pmf(pmf)?,
            (None, Some(samples)) => {
                let mut counts = [0u32; 5];
                for &s in samples {
                    counts[Rating::new(s)?.index()] += 1;
                }
                RatingDistribution::from_counts(counts)?
            }
            _ => {
                return Err(Error::InvalidPmf(format!(
                    "{}:{}: row needs exactly one of pmf or samples",
                    path.display(),
                    idx + 1
                )))
            }
        };
        if let Some(p) = row.provenance {
            set.provenance = p;
        }
        set.insert(row.situation_id, row.dimension, d);
    }
    Ok(set)
}

/// Write predictions as JSONL with explicit pmfs.
pub fn write_predictions(path: &Path, set: &PredictionSet) -> Result<()> {
    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    for ((sid, dim), d) in &set.entries {
        let row = PredictionRow {
            situation_id: sid.clone(),
            dimension: *dim,
            pmf: Some(*d.pmf()),
            samples: None,
            provenance: Some(set.provenance),
        };
        let line = serde_json::to_string(&row).map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

impl EvalReport {
    /// Aligned text table, three decimals per metric.
    pub fn to_text_table(&self) -> String {
        fn var_cell(v: Option<f64>) -> String {
            v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
        }

        let mut out = String::new();
        let name_width = self
            .per_dimension
            .keys()
            .map(|d| d.name().len())
            .chain(["aggregate".len()])
            .max()
            .unwrap_or(12);
        out.push_str(&format!(
            "{:<name_width$}  {:>11}  {:>7}  {:>8}\n",
            "dimension", "wasserstein", "mu-mae", "var-mae"
        ));
        for (dim, t) in &self.per_dimension {
            out.push_str(&format!(
                "{:<name_width$}  {:>11.3}  {:>7.3}  {:>8}\n",
                dim.name(),
                t.wasserstein,
                t.mu_mae,
                var_cell(t.var_mae)
            ));
        }
        out.push_str(&format!(
            "{:<name_width$}  {:>11.3}  {:>7.3}  {:>8}\n",
            "aggregate",
            self.aggregate.wasserstein,
            self.aggregate.mu_mae,
            var_cell(self.aggregate.var_mae)
        ));
        out.push_str(&format!(
            "items: {}  variance-skipped: {}\n",
            self.n_items, self.variance_skipped
        ));
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::json(path, e))
    }
}

/// Write per-item scores as JSONL for downstream significance tests.
pub fn write_item_scores(path: &Path, items: &[ItemScore]) -> Result<()> {
    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read per-item scores written by [`write_item_scores`].
pub fn read_item_scores(path: &Path) -> Result<Vec<ItemScore>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(v: u8) -> Rating {
        Rating::new(v).unwrap()
    }

    fn multiset(sid: &str, dim: DimensionId, values: &[u8]) -> RatingMultiset {
        RatingMultiset::new(sid, dim, values.iter().map(|&v| r(v)).collect()).unwrap()
    }

    fn self_predictions(truth: &[RatingMultiset]) -> PredictionSet {
        let mut set = PredictionSet::new(Provenance::PredictionFile);
        for m in truth {
            set.insert(
                m.situation_id.clone(),
                m.dimension,
                empirical_distribution(m).unwrap(),
            );
        }
        set
    }

    #[test]
    fn self_comparison_scores_zero_wasserstein_and_mean() {
        let truth = vec![
            multiset("s1", DimensionId::Suddenness, &[1, 2, 4, 5, 5]),
            multiset("s1", DimensionId::Effort, &[3, 3, 3, 3, 3]),
            multiset("s2", DimensionId::Suddenness, &[2, 2, 3]),
        ];
        let preds = self_predictions(&truth);
        let report = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
        assert_eq!(report.aggregate.wasserstein, 0.0);
        assert_eq!(report.aggregate.mu_mae, 0.0);
        for t in report.per_dimension.values() {
            assert_eq!(t.wasserstein, 0.0);
            assert_eq!(t.mu_mae, 0.0);
        }
    }

    #[test]
    fn self_comparison_is_exactly_zero_on_unanimous_items() {
        let truth = vec![
            multiset("s1", DimensionId::Suddenness, &[4, 4, 4, 4, 4]),
            multiset("s2", DimensionId::Effort, &[1, 1, 1]),
        ];
        let preds = self_predictions(&truth);
        let report = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
        assert_eq!(report.aggregate.wasserstein, 0.0);
        assert_eq!(report.aggregate.mu_mae, 0.0);
        assert_eq!(report.aggregate.var_mae, Some(0.0));
    }

    #[test]
    fn worked_single_item_scores() {
        // pred: point mass at 3, truth {1, 5}
        let truth = vec![multiset("s1", DimensionId::Attention, &[1, 5])];
        let mut preds = PredictionSet::new(Provenance::PredictionFile);
        preds.insert(
            "s1",
            DimensionId::Attention,
            RatingDistribution::point_mass(r(3)),
        );
        let report = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
        assert!((report.aggregate.wasserstein - 2.0).abs() < 1e-12);
        assert_eq!(report.aggregate.mu_mae, 0.0);
        assert_eq!(report.aggregate.var_mae, Some(8.0));
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let truth = vec![multiset("s1", DimensionId::Attention, &[1, 5])];
        let preds = PredictionSet::new(Provenance::PredictionFile);
        let err = evaluate(&preds, &truth, &EvalOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingPrediction { .. }));
    }

    #[test]
    fn single_annotation_items_skip_variance() {
        let truth = vec![
            multiset("s1", DimensionId::Attention, &[4]),
            multiset("s2", DimensionId::Attention, &[1, 5]),
        ];
        let preds = self_predictions(&truth);
        let report = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
        assert_eq!(report.variance_skipped, 1);
        assert_eq!(report.n_items, 2);
    }

    #[test]
    fn evaluate_is_permutation_invariant() {
        let mut truth = vec![
            multiset("s1", DimensionId::Suddenness, &[1, 2, 4]),
            multiset("s2", DimensionId::Effort, &[2, 2, 5]),
            multiset("s3", DimensionId::Attention, &[1, 1, 2]),
        ];
        let preds = random_baseline(&truth.iter().map(|m| m.key()).collect::<Vec<_>>(), 30, 7);
        let a = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
        truth.reverse();
        let b = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
        assert_eq!(
            a.aggregate.wasserstein.to_bits(),
            b.aggregate.wasserstein.to_bits()
        );
        assert_eq!(a.aggregate.mu_mae.to_bits(), b.aggregate.mu_mae.to_bits());
    }

    #[test]
    fn parallel_scoring_is_bit_identical() {
        let truth: Vec<RatingMultiset> = (0..40)
            .map(|i| {
                multiset(
                    &format!("s{i:02}"),
                    DimensionId::ALL[i % 21],
                    &[
                        1 + (i % 5) as u8,
                        1 + ((i * 3) % 5) as u8,
                        5 - (i % 5) as u8,
                    ],
                )
            })
            .collect();
        let keys: Vec<_> = truth.iter().map(|m| m.key()).collect();
        let preds = random_baseline(&keys, 30, 11);
        let serial = evaluate(
            &preds,
            &truth,
            &EvalOptions {
                workers: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let parallel = evaluate(
            &preds,
            &truth,
            &EvalOptions {
                workers: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            serial.aggregate.wasserstein.to_bits(),
            parallel.aggregate.wasserstein.to_bits()
        );
        assert_eq!(
            serial.aggregate.mu_mae.to_bits(),
            parallel.aggregate.mu_mae.to_bits()
        );
        assert_eq!(
            serial.aggregate.var_mae.map(f64::to_bits),
            parallel.aggregate.var_mae.map(f64::to_bits)
        );
    }

    #[test]
    fn random_baseline_is_deterministic_and_converges_to_uniform() {
        let keys = vec![("s1".to_string(), DimensionId::Suddenness)];
        let a = random_baseline(&keys, 30, 42);
        let b = random_baseline(&keys, 30, 42);
        assert_eq!(
            a.get("s1", DimensionId::Suddenness).unwrap().pmf(),
            b.get("s1", DimensionId::Suddenness).unwrap().pmf()
        );

        let big = random_baseline(&keys, 1_000_000, 42);
        for &p in big.get("s1", DimensionId::Suddenness).unwrap().pmf() {
            assert!((p - 0.2).abs() < 0.005, "entry {p}");
        }
    }

    #[test]
    fn majority_baseline_uses_modal_rating_with_tie_toward_smaller() {
        let train = vec![multiset("t1", DimensionId::Effort, &[3, 3, 3])];
        let fit = MajorityBaseline::fit(&train).unwrap();
        assert_eq!(fit.mode(DimensionId::Effort).unwrap().value(), 3);

        let train = vec![multiset("t1", DimensionId::Effort, &[1, 1, 5, 5])];
        let fit = MajorityBaseline::fit(&train).unwrap();
        assert_eq!(fit.mode(DimensionId::Effort).unwrap().value(), 1);

        let err = fit
            .predict(&[("s1".to_string(), DimensionId::Attention)])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionNotInTraining(DimensionId::Attention)
        ));
    }

    #[test]
    fn prediction_file_round_trip_and_samples_form() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let mut set = PredictionSet::new(Provenance::PredictionFile);
        set.insert("s1", DimensionId::Suddenness, RatingDistribution::uniform());
        set.insert(
            "s2",
            DimensionId::Effort,
            RatingDistribution::point_mass(r(2)),
        );
        write_predictions(&path, &set).unwrap();
        let back = load_predictions(&path).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(
            back.get("s1", DimensionId::Suddenness).unwrap().pmf(),
            &[0.2; 5]
        );

        let samples_path = dir.path().join("samples.jsonl");
        std::fs::write(
            &samples_path,
            r#"{"situation_id":"s1","dimension":"effort","samples":[1,1,4,5,5]}"#,
        )
        .unwrap();
        let from_samples = load_predictions(&samples_path).unwrap();
        assert_eq!(
            from_samples.get("s1", DimensionId::Effort).unwrap().pmf(),
            &[0.4, 0.0, 0.0, 0.2, 0.4]
        );
    }

    proptest! {
        #[test]
        fn report_values_are_finite_and_bounded(
            values in proptest::collection::vec(proptest::collection::vec(1u8..=5, 2..8), 1..12),
            seed in 0u64..1000,
        ) {
            let truth: Vec<RatingMultiset> = values
                .iter()
                .enumerate()
                .map(|(i, vs)| multiset(&format!("s{i}"), DimensionId::ALL[i % 21], vs))
                .collect();
            let keys: Vec<_> = truth.iter().map(|m| m.key()).collect();
            let preds = random_baseline(&keys, 30, seed);
            let report = evaluate(&preds, &truth, &EvalOptions::default()).unwrap();
            prop_assert!(report.aggregate.wasserstein.is_finite());
            prop_assert!((0.0..=4.0).contains(&report.aggregate.wasserstein));
            prop_assert!((0.0..=4.0).contains(&report.aggregate.mu_mae));
            if let Some(v) = report.aggregate.var_mae {
                prop_assert!((0.0..=8.0).contains(&v));
            }
        }
    }
}
