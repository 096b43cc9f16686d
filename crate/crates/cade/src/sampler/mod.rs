//! Rating collection from chat endpoints: reply parsing, cache-first
//! batching with retries, and the sampling-temperature grid search.

mod cache;
mod endpoint;

pub use cache::{fingerprint, ReplyCache};
pub use endpoint::{BoltzmannEndpoint, ChatCall, ChatEndpoint, HttpEndpoint};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Rating, RatingMultiset};
use crate::distributions::RatingDistribution;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions, MetricTriple, PredictionSet, Provenance};
use crate::persona::PromptBundle;

pub const TEMPERATURE_MAX: f64 = 1.5;

/// Default grid over the admissible temperature range.
pub const DEFAULT_GRID: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5];

/// One sampling job: a prompt to be answered `n` times at a temperature.
#[derive(Debug, Clone)]
pub struct SampleRequest {
    pub prompt: PromptBundle,
    pub temperature: f64,
    pub n: usize,
    pub model_name: String,
}

impl SampleRequest {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=TEMPERATURE_MAX).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "temperature {} outside [0, {TEMPERATURE_MAX}]",
                self.temperature
            )));
        }
        if self.n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Replies gathered for one request, split into parsed ratings and
/// failures. `parsed.len() + failures.len() == raw_replies.len()`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleBatch {
    /// Content hash over the per-reply fingerprints.
    pub fingerprint: String,
    pub raw_replies: Vec<String>,
    pub parsed: Vec<Rating>,
    pub failures: Vec<ParseFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseFailure {
    pub index: usize,
    pub raw: String,
    pub reason: String,
}

impl SampleBatch {
    /// Empirical distribution of the parsed ratings.
    pub fn distribution(&self) -> Result<RatingDistribution> {
        let mut counts = [0u32; 5];
        for r in &self.parsed {
            counts[r.index()] += 1;
        }
        RatingDistribution::from_counts(counts)
    }
}

/// Extract a rating from a model reply.
///
/// Takes the first integer after a case-insensitive `Rating:` marker, or a
/// lone leading integer when no marker is present. Anything else is a
/// failure; replies are never silently defaulted.
pub fn parse_rating(reply: &str) -> Result<Rating> {
    let fail = || Error::UnparseableReply(reply.to_string());

    let lower = reply.to_lowercase();
    if let Some(pos) = lower.find("rating:") {
        let tail = &reply[pos + "rating:".len()..];
        let digits: String = tail
            .chars()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect();
        if digits.is_empty() {
            return Err(fail());
        }
        let value: u64 = digits.parse().map_err(|_| fail())?;
        return u8::try_from(value)
            .ok()
            .and_then(|v| Rating::new(v).ok())
            .ok_or_else(fail);
    }

    // fallback: a lone leading integer such as "4", "[3]" or "2."
    let trimmed = reply.trim_start().trim_start_matches(['[', '(', '"', '\'']);
    let digits: String = trimmed.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return Err(fail());
    }
    let rest = &trimmed[digits.len()..];
    if rest
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphanumeric())
    {
        return Err(fail());
    }
    let value: u64 = digits.parse().map_err(|_| fail())?;
    u8::try_from(value)
        .ok()
        .and_then(|v| Rating::new(v).ok())
        .ok_or_else(fail)
}

/// Retry, failure-tolerance and request-shaping settings for collection.
#[derive(Debug, Clone)]
pub struct CollectOptions {
    pub retries: u32,
    pub backoff_ms: u64,
    /// Abort an item when more than this fraction of replies fail to parse.
    pub max_failure_ratio: f64,
    pub workers: usize,
    /// Reply budget; the prompt asks for a bare rating, so keep it tight.
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            retries: 3,
            backoff_ms: 500,
            max_failure_ratio: 0.5,
            workers: 1,
            max_tokens: 16,
            stop: Vec::new(),
        }
    }
}

fn call_with_retry(
    endpoint: &dyn ChatEndpoint,
    call: &ChatCall,
    opts: &CollectOptions,
    jitter_key: &str,
) -> Result<String> {
    let mut last_err = None;
    for attempt in 0..opts.retries.max(1) {
        match endpoint.chat(call) {
            Ok(reply) => return Ok(reply),
            Err(err @ Error::Endpoint { .. }) => {
                last_err = Some(err);
                if attempt + 1 < opts.retries.max(1) && opts.backoff_ms > 0 {
                    // deterministic jitter derived from the request key
                    let jitter =
                        u64::from(jitter_key.as_bytes()[attempt as usize % jitter_key.len()]);
                    let delay = opts.backoff_ms * (1 << attempt) + jitter;
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
            }
            Err(other) => return Err(other),
        }
    }
    Err(last_err.unwrap_or(Error::Endpoint {
        status: None,
        message: "no attempts made".into(),
    }))
}

fn batch_fingerprint(per_reply: &[String]) -> String {
    let mut hasher = Sha256::new();
    for fp in per_reply {
        hasher.update(fp.as_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collect `n` replies for one request, cache first and live second.
///
/// Temperature-zero requests are sent once and the reply replicated, since
/// deterministic decoding makes repeats redundant. Parse failures are
/// recorded, not imputed; items where more than half the replies fail are
/// aborted.
pub fn collect(
    req: &SampleRequest,
    endpoint: &dyn ChatEndpoint,
    cache: &ReplyCache,
    opts: &CollectOptions,
) -> Result<SampleBatch> {
    req.validate()?;
    let distinct_calls = if req.temperature == 0.0 { 1 } else { req.n };

    let call = ChatCall {
        model: &req.model_name,
        system: &req.prompt.system,
        user: &req.prompt.user,
        temperature: req.temperature,
        max_tokens: opts.max_tokens,
        stop: &opts.stop,
    };

    let mut fingerprints = Vec::with_capacity(distinct_calls);
    let mut raw_replies = Vec::with_capacity(req.n);
    for i in 0..distinct_calls {
        let fp = fingerprint(
            &req.model_name,
            &req.prompt.system,
            &req.prompt.user,
            req.temperature,
            i,
        );
        let raw = match cache.get(&fp) {
            Some(hit) => hit,
            None => {
                let reply = call_with_retry(endpoint, &call, opts, &fp)?;
                cache.put(&fp, &reply)?;
                reply
            }
        };
        fingerprints.push(fp);
        raw_replies.push(raw);
    }
    while raw_replies.len() < req.n {
        raw_replies.push(raw_replies[0].clone());
    }

    finish_batch(batch_fingerprint(&fingerprints), raw_replies, opts)
}

fn finish_batch(
    fingerprint: String,
    raw_replies: Vec<String>,
    opts: &CollectOptions,
) -> Result<SampleBatch> {
    let mut parsed = Vec::new();
    let mut failures = Vec::new();
    for (index, raw) in raw_replies.iter().enumerate() {
        match parse_rating(raw) {
            Ok(r) => parsed.push(r),
            Err(e) => failures.push(ParseFailure {
                index,
                raw: raw.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let total = raw_replies.len();
    if failures.len() as f64 > opts.max_failure_ratio * total as f64 {
        return Err(Error::TooManyParseFailures {
            failed: failures.len(),
            total,
        });
    }
    Ok(SampleBatch {
        fingerprint,
        raw_replies,
        parsed,
        failures,
    })
}

/// Merge several single-sample requests into one batch.
///
/// This is the persona path: the same situation paired with different
/// profiles, one reply each.
pub fn collect_merged(
    reqs: &[SampleRequest],
    endpoint: &dyn ChatEndpoint,
    cache: &ReplyCache,
    opts: &CollectOptions,
) -> Result<SampleBatch> {
    if reqs.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut fingerprints = Vec::new();
    let mut raw_replies = Vec::new();
    for req in reqs {
        req.validate()?;
        for i in 0..req.n {
            let sample_index = if req.temperature == 0.0 { 0 } else { i };
            let fp = fingerprint(
                &req.model_name,
                &req.prompt.system,
                &req.prompt.user,
                req.temperature,
                sample_index,
            );
            let raw = match cache.get(&fp) {
                Some(hit) => hit,
                None => {
                    let call = ChatCall {
                        model: &req.model_name,
                        system: &req.prompt.system,
                        user: &req.prompt.user,
                        temperature: req.temperature,
                        max_tokens: opts.max_tokens,
                        stop: &opts.stop,
                    };
                    let reply = call_with_retry(endpoint, &call, opts, &fp)?;
                    cache.put(&fp, &reply)?;
                    reply
                }
            };
            fingerprints.push(fp);
            raw_replies.push(raw);
        }
    }
    finish_batch(batch_fingerprint(&fingerprints), raw_replies, opts)
}

/// Run many collection jobs with bounded parallelism.
///
/// Results come back in input order regardless of worker interleaving.
pub fn collect_all(
    reqs: &[SampleRequest],
    endpoint: &dyn ChatEndpoint,
    cache: &ReplyCache,
    opts: &CollectOptions,
) -> Result<Vec<SampleBatch>> {
    let workers = opts.workers.max(1);
    if workers == 1 || reqs.len() < 2 {
        return reqs
            .iter()
            .map(|r| collect(r, endpoint, cache, opts))
            .collect();
    }
    let mut slots: Vec<Option<Result<SampleBatch>>> = Vec::new();
    slots.resize_with(reqs.len(), || None);
    let slots = std::sync::Mutex::new(slots);
    let cursor = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(reqs.len()) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= reqs.len() {
                    break;
                }
                let out = collect(&reqs[i], endpoint, cache, opts);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every request processed"))
        .collect()
}

/// One grid-search item: the prompt for a (situation, dimension) pair and
/// the human ratings it is scored against.
#[derive(Debug, Clone)]
pub struct GridItem {
    pub prompt: PromptBundle,
    pub truth: RatingMultiset,
}

/// Aggregate metrics observed at one grid temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub temperature: f64,
    pub wasserstein: f64,
    pub mu_mae: f64,
    pub var_mae: Option<f64>,
}

/// Grid-search result: the selected temperature and the full table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchOutcome {
    pub selected_temperature: f64,
    pub rows: Vec<TemperatureRow>,
}

impl GridSearchOutcome {
    /// Long-form CSV: temperature, wasserstein, mu_mae, var_mae.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("temperature,wasserstein,mu_mae,var_mae\n");
        for row in &self.rows {
            let var = row.var_mae.map_or_else(String::new, |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{:.2},{:.6},{:.6},{var}\n",
                row.temperature, row.wasserstein, row.mu_mae
            ));
        }
        out
    }
}

/// Shared sampling parameters for a grid search.
#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub model_name: String,
    pub n: usize,
}

/// Search the temperature grid for the sampled distribution closest to the
/// human ratings, measured by aggregate Wasserstein distance.
///
/// Returns the full per-temperature table; ties select the smaller
/// temperature.
pub fn grid_search_temperature(
    items: &[GridItem],
    spec: &SamplingSpec,
    grid: &[f64],
    endpoint: &dyn ChatEndpoint,
    cache: &ReplyCache,
    opts: &CollectOptions,
) -> Result<GridSearchOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("temperature grid is empty".into()));
    }
    for &t in grid {
        if !(0.0..=TEMPERATURE_MAX).contains(&t) {
            return Err(Error::Config(format!(
                "grid temperature {t} outside [0, {TEMPERATURE_MAX}]"
            )));
        }
    }
    if items.is_empty() {
        return Err(Error::EmptySamples);
    }

    let truths: Vec<RatingMultiset> = items.iter().map(|it| it.truth.clone()).collect();
    let mut sorted_grid: Vec<f64> = grid.to_vec();
    sorted_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rows = Vec::with_capacity(sorted_grid.len());
    for &temperature in &sorted_grid {
        let reqs: Vec<SampleRequest> = items
            .iter()
            .map(|it| SampleRequest {
                prompt: it.prompt.clone(),
                temperature,
                n: spec.n,
                model_name: spec.model_name.clone(),
            })
            .collect();
        let batches = collect_all(&reqs, endpoint, cache, opts)?;

        let mut preds = PredictionSet::new(Provenance::LlmSamples);
        for (item, batch) in items.iter().zip(&batches) {
            preds.insert(
                item.truth.situation_id.clone(),
                item.truth.dimension,
                batch.distribution()?,
            );
        }
        let report = evaluate(
            &preds,
            &truths,
            &EvalOptions {
                workers: opts.workers,
                ..Default::default()
            },
        )?;
        let MetricTriple {
            wasserstein,
            mu_mae,
            var_mae,
        } = report.aggregate;
        rows.push(TemperatureRow {
            temperature,
            wasserstein,
            mu_mae,
            var_mae,
        });
    }

    let mut selected = rows[0].temperature;
    let mut best = rows[0].wasserstein;
    for row in &rows[1..] {
        if row.wasserstein < best {
            best = row.wasserstein;
            selected = row.temperature;
        }
    }
    Ok(GridSearchOutcome {
        selected_temperature: selected,
        rows,
    })
}

/// Per-item view over batches keyed like the prediction set, useful when
/// persisting raw sampling output.
pub fn batches_to_predictions(
    keys: &[(String, crate::dataset::DimensionId)],
    batches: &[SampleBatch],
) -> Result<PredictionSet> {
    if keys.len() != batches.len() {
        return Err(Error::LengthMismatch {
            left: keys.len(),
            right: batches.len(),
        });
    }
    let mut set = PredictionSet::new(Provenance::LlmSamples);
    let mut ordered: BTreeMap<(String, crate::dataset::DimensionId), RatingDistribution> =
        BTreeMap::new();
    for ((sid, dim), batch) in keys.iter().zip(batches) {
        ordered.insert((sid.clone(), *dim), batch.distribution()?);
    }
    set.entries = ordered;
    Ok(set)
}
