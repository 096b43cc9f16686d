//! Dataset ingestion: canonical appraisal schema, dimension unification,
//! rating rescaling, and grouping of annotations into per-situation,
//! per-dimension rating multisets.
//!
//! The canonical schema follows the EnVent conventions: 21 appraisal
//! dimensions rated on a 5-point Likert scale by several annotators per
//! situation. FGE and CovidET exports use their own dimension names and a
//! 10-point scale; both are unified here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persona::PersonaProfile;

/// One Likert point on the canonical 5-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Rating(u8);

impl Rating {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(value: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Rating(value))
        } else {
            Err(Error::RatingOutOfRange {
                value: i64::from(value),
                min: Self::MIN,
                max: Self::MAX,
            })
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based index into pmf/count arrays.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn all() -> impl Iterator<Item = Rating> {
        (Self::MIN..=Self::MAX).map(Rating)
    }
}

impl TryFrom<u8> for Rating {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Rating::new(value)
    }
}

impl From<Rating> for u8 {
    fn from(r: Rating) -> u8 {
        r.0
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Map a 10-point rating onto the canonical 5-point scale.
///
/// Divides by two and rounds half up, then clamps into [1, 5], so the scale
/// extremes map to the scale extremes and the mapping is monotone.
pub fn rescale_rating(r: u8) -> Result<Rating> {
    if !(1..=10).contains(&r) {
        return Err(Error::RatingOutOfRange {
            value: i64::from(r),
            min: 1,
            max: 10,
        });
    }
    // round_half_up(r / 2) == (r + 1) / 2 for integer r
    let halved = r.div_ceil(2);
    Rating::new(halved.clamp(1, 5))
}

/// The 21 canonical appraisal dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionId {
    Suddenness,
    Familiarity,
    PredictEvent,
    Pleasantness,
    Unpleasantness,
    GoalRelevance,
    ChanceResponsibility,
    SelfResponsibility,
    OtherResponsibility,
    PredictConsequence,
    GoalSupport,
    Urgency,
    SelfControl,
    OtherControl,
    ChanceControl,
    AcceptConsequence,
    Standards,
    SocialNorms,
    Attention,
    NotConsider,
    Effort,
}

impl DimensionId {
    pub const ALL: [DimensionId; 21] = [
        DimensionId::Suddenness,
        DimensionId::Familiarity,
        DimensionId::PredictEvent,
        DimensionId::Pleasantness,
        DimensionId::Unpleasantness,
        DimensionId::GoalRelevance,
        DimensionId::ChanceResponsibility,
        DimensionId::SelfResponsibility,
        DimensionId::OtherResponsibility,
        DimensionId::PredictConsequence,
        DimensionId::GoalSupport,
        DimensionId::Urgency,
        DimensionId::SelfControl,
        DimensionId::OtherControl,
        DimensionId::ChanceControl,
        DimensionId::AcceptConsequence,
        DimensionId::Standards,
        DimensionId::SocialNorms,
        DimensionId::Attention,
        DimensionId::NotConsider,
        DimensionId::Effort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DimensionId::Suddenness => "suddenness",
            DimensionId::Familiarity => "familiarity",
            DimensionId::PredictEvent => "predict_event",
            DimensionId::Pleasantness => "pleasantness",
            DimensionId::Unpleasantness => "unpleasantness",
            DimensionId::GoalRelevance => "goal_relevance",
            DimensionId::ChanceResponsibility => "chance_responsibility",
            DimensionId::SelfResponsibility => "self_responsibility",
            DimensionId::OtherResponsibility => "other_responsibility",
            DimensionId::PredictConsequence => "predict_consequence",
            DimensionId::GoalSupport => "goal_support",
            DimensionId::Urgency => "urgency",
            DimensionId::SelfControl => "self_control",
            DimensionId::OtherControl => "other_control",
            DimensionId::ChanceControl => "chance_control",
            DimensionId::AcceptConsequence => "accept_consequence",
            DimensionId::Standards => "standards",
            DimensionId::SocialNorms => "social_norms",
            DimensionId::Attention => "attention",
            DimensionId::NotConsider => "not_consider",
            DimensionId::Effort => "effort",
        }
    }

    /// Short column code used in wide tables and heatmap exports.
    ///
    /// `standards` is coded `ST` to keep the codes unique.
    pub fn abbrev(self) -> &'static str {
        match self {
            DimensionId::Suddenness => "SD",
            DimensionId::Familiarity => "FL",
            DimensionId::PredictEvent => "PE",
            DimensionId::Pleasantness => "PL",
            DimensionId::Unpleasantness => "UPL",
            DimensionId::GoalRelevance => "GR",
            DimensionId::ChanceResponsibility => "CR",
            DimensionId::SelfResponsibility => "SR",
            DimensionId::OtherResponsibility => "OR",
            DimensionId::PredictConsequence => "PC",
            DimensionId::GoalSupport => "GS",
            DimensionId::Urgency => "UG",
            DimensionId::SelfControl => "SC",
            DimensionId::OtherControl => "OC",
            DimensionId::ChanceControl => "CC",
            DimensionId::AcceptConsequence => "AC",
            DimensionId::Standards => "ST",
            DimensionId::SocialNorms => "SN",
            DimensionId::Attention => "AT",
            DimensionId::NotConsider => "NC",
            DimensionId::Effort => "EF",
        }
    }

    pub fn from_name(name: &str) -> Option<DimensionId> {
        DimensionId::ALL.iter().copied().find(|d| d.name() == name)
    }
}

impl fmt::Display for DimensionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Origin of an appraisal dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceDataset {
    EnVent,
    FGE,
    CovidET,
    Other,
}

impl fmt::Display for SourceDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceDataset::EnVent => "EnVent",
            SourceDataset::FGE => "FGE",
            SourceDataset::CovidET => "CovidET",
            SourceDataset::Other => "Other",
        };
        f.write_str(s)
    }
}

/// One annotator's rating of one dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator_id: String,
    pub dimension: DimensionId,
    pub rating: Rating,
}

/// One situation with its per-annotator, per-dimension ratings and the
/// annotators' profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalRecord {
    pub situation_id: String,
    pub text: String,
    pub source_dataset: SourceDataset,
    pub annotations: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub profiles: BTreeMap<String, PersonaProfile>,
}

/// Built-in and user-supplied mapping from source dimension names to the
/// canonical set.
#[derive(Debug, Clone, Default)]
pub struct DimensionMap {
    entries: BTreeMap<(SourceDataset, String), DimensionId>,
}

const FGE_MAP: [(&str, DimensionId); 15] = [
    ("suddenness", DimensionId::Suddenness),
    ("familiarity", DimensionId::Familiarity),
    ("expectedness", DimensionId::PredictEvent),
    ("pleasantness", DimensionId::Pleasantness),
    ("goal relevance", DimensionId::GoalRelevance),
    ("agent_intention", DimensionId::ChanceResponsibility),
    ("self_cause", DimensionId::SelfResponsibility),
    ("agent_cause", DimensionId::OtherResponsibility),
    ("certainty", DimensionId::PredictConsequence),
    ("goal_consistency", DimensionId::GoalSupport),
    ("control", DimensionId::SelfControl),
    ("coping", DimensionId::AcceptConsequence),
    ("self_consistency", DimensionId::Standards),
    ("moral", DimensionId::SocialNorms),
    ("attention", DimensionId::Attention),
];

const COVIDET_MAP: [(&str, DimensionId); 16] = [
    ("familiarity", DimensionId::Familiarity),
    ("expectedness", DimensionId::PredictEvent),
    ("pleasantness", DimensionId::Pleasantness),
    ("goal relevance", DimensionId::GoalRelevance),
    ("self-responsibility", DimensionId::SelfResponsibility),
    ("other-responsibility", DimensionId::OtherResponsibility),
    ("predictability", DimensionId::PredictConsequence),
    ("goal conduciveness", DimensionId::GoalSupport),
    ("self-controllable", DimensionId::SelfControl),
    ("other-controllable", DimensionId::OtherControl),
    ("circumstances-controllable", DimensionId::ChanceControl),
    ("problem-focused coping", DimensionId::AcceptConsequence),
    ("consistency with internal values", DimensionId::Standards),
    ("consistency with social norms", DimensionId::SocialNorms),
    ("attentional activity", DimensionId::Attention),
    ("effort", DimensionId::Effort),
];

impl DimensionMap {
    /// Mapping for the FGE and CovidET exports. EnVent names are canonical
    /// and map to themselves.
    pub fn built_in() -> Self {
        let mut entries = BTreeMap::new();
        for (src, dst) in FGE_MAP {
            entries.insert((SourceDataset::FGE, src.to_string()), dst);
        }
        for (src, dst) in COVIDET_MAP {
            entries.insert((SourceDataset::CovidET, src.to_string()), dst);
        }
        DimensionMap { entries }
    }

    /// Load user overrides from JSON: `{source_dataset: {source_name: canonical_name}}`.
    ///
    /// Entries extend (and shadow) the built-in mapping.
    pub fn load_overrides(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: BTreeMap<String, BTreeMap<String, String>> =
            serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        let mut map = Self::built_in();
        for (dataset_name, names) in parsed {
            let dataset = match dataset_name.as_str() {
                "EnVent" => SourceDataset::EnVent,
                "FGE" => SourceDataset::FGE,
                "CovidET" => SourceDataset::CovidET,
                "Other" => SourceDataset::Other,
                other => {
                    return Err(Error::Config(format!(
                        "unknown source dataset {other:?} in dimension map"
                    )))
                }
            };
            for (src, dst) in names {
                let canonical = DimensionId::from_name(&dst).ok_or_else(|| {
                    Error::Config(format!("{dst:?} is not a canonical dimension name"))
                })?;
                map.entries.insert((dataset, src), canonical);
            }
        }
        Ok(map)
    }

    pub fn insert(&mut self, dataset: SourceDataset, source_name: &str, target: DimensionId) {
        self.entries
            .insert((dataset, source_name.to_string()), target);
    }

    /// Resolve a source dimension name to its canonical id.
    ///
    /// Names that are already canonical map to themselves, so EnVent passes
    /// through unchanged.
    pub fn map_dimension(&self, dataset: SourceDataset, source_name: &str) -> Result<DimensionId> {
        if let Some(&id) = self.entries.get(&(dataset, source_name.to_string())) {
            return Ok(id);
        }
        if let Some(id) = DimensionId::from_name(source_name) {
            return Ok(id);
        }
        Err(Error::UnmappedDimension {
            dataset,
            name: source_name.to_string(),
        })
    }
}

/// Resolve a source dimension name using the built-in mapping only.
pub fn map_dimension(dataset: SourceDataset, source_name: &str) -> Result<DimensionId> {
    DimensionMap::built_in().map_dimension(dataset, source_name)
}

/// Rating scale used by the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingScale {
    FivePoint,
    TenPoint,
}

/// Describes how an input file encodes dimensions and ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetLayout {
    pub scale: RatingScale,
    /// When true, dimension names are mapped through a `DimensionMap`;
    /// annotations whose names have no canonical equivalent are dropped
    /// with a warning. When false, names must already be canonical.
    pub map_dimensions: bool,
}

impl DatasetLayout {
    /// Canonical layout: 5-point scale, canonical dimension names.
    pub fn canonical() -> Self {
        DatasetLayout {
            scale: RatingScale::FivePoint,
            map_dimensions: false,
        }
    }

    /// Source layout: names resolved through the dimension map.
    pub fn source(scale: RatingScale) -> Self {
        DatasetLayout {
            scale,
            map_dimensions: true,
        }
    }
}

/// A row the parser refused, with enough context to fix the input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: usize,
    pub raw: String,
    pub reason: String,
}

/// Result of parsing one dataset file.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub records: Vec<AppraisalRecord>,
    pub rejects: Vec<RejectedRow>,
    /// Source dimension names that were dropped for having no canonical
    /// equivalent, with occurrence counts.
    pub dropped_dimensions: BTreeMap<String, usize>,
}

impl ParseOutcome {
    /// Write the rejects report as JSONL: one object per refused row.
    pub fn write_rejects(&self, path: &Path) -> Result<()> {
        let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
        for reject in &self.rejects {
            let line = serde_json::to_string(reject).map_err(|e| Error::json(path, e))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    annotator_id: String,
    dimension: String,
    rating: i64,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    situation_id: String,
    #[serde(default)]
    text: String,
    source_dataset: SourceDataset,
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    profiles: BTreeMap<String, PersonaProfile>,
}

/// Parse a newline-delimited JSON dataset into appraisal records.
///
/// One object per situation. Malformed rows are collected into the rejects
/// report instead of being dropped silently; a file that yields zero valid
/// records is an error.
pub fn parse_records(
    path: &Path,
    layout: &DatasetLayout,
    map: &DimensionMap,
) -> Result<ParseOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut outcome = ParseOutcome {
        records: Vec::new(),
        rejects: Vec::new(),
        dropped_dimensions: BTreeMap::new(),
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(&line, layout, map, &mut outcome.dropped_dimensions) {
            Ok(record) => outcome.records.push(record),
            Err(reason) => outcome.rejects.push(RejectedRow {
                line: idx + 1,
                raw: line,
                reason,
            }),
        }
    }

    if outcome.records.is_empty() {
        return Err(Error::NoValidRecords { path: path.into() });
    }
    Ok(outcome)
}

fn parse_row(
    line: &str,
    layout: &DatasetLayout,
    map: &DimensionMap,
    dropped: &mut BTreeMap<String, usize>,
) -> std::result::Result<AppraisalRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    if raw.situation_id.is_empty() {
        return Err("empty situation_id".into());
    }
    if raw.annotations.is_empty() {
        return Err("no annotations".into());
    }
    for profile in raw.profiles.values() {
        profile
            .validate()
            .map_err(|e| format!("invalid profile: {e}"))?;
    }

    let mut annotations = Vec::with_capacity(raw.annotations.len());
    let mut seen = BTreeSet::new();
    for ann in raw.annotations {
        let dimension = if layout.map_dimensions {
            match map.map_dimension(raw.source_dataset, &ann.dimension) {
                Ok(d) => d,
                Err(Error::UnmappedDimension { name, .. }) => {
                    *dropped.entry(name).or_insert(0) += 1;
                    continue;
                }
                Err(e) => return Err(e.to_string()),
            }
        } else {
            DimensionId::from_name(&ann.dimension)
                .ok_or_else(|| format!("unknown dimension {:?}", ann.dimension))?
        };

        let rating = parse_rating_value(ann.rating, layout.scale).map_err(|e| e.to_string())?;

        if !seen.insert((ann.annotator_id.clone(), dimension)) {
            return Err(format!(
                "duplicate annotation for ({}, {dimension})",
                ann.annotator_id
            ));
        }
        annotations.push(Annotation {
            annotator_id: ann.annotator_id,
            dimension,
            rating,
        });
    }

    if annotations.is_empty() {
        return Err("no mappable annotations".into());
    }
    Ok(AppraisalRecord {
        situation_id: raw.situation_id,
        text: raw.text,
        source_dataset: raw.source_dataset,
        annotations,
        profiles: raw.profiles,
    })
}

fn parse_rating_value(value: i64, scale: RatingScale) -> Result<Rating> {
    match scale {
        RatingScale::FivePoint => {
            let v = u8::try_from(value).map_err(|_| Error::RatingOutOfRange {
                value,
                min: 1,
                max: 5,
            })?;
            Rating::new(v)
        }
        RatingScale::TenPoint => {
            let v = u8::try_from(value).map_err(|_| Error::RatingOutOfRange {
                value,
                min: 1,
                max: 10,
            })?;
            rescale_rating(v)
        }
    }
}

/// Write records back out in the canonical JSONL layout.
pub fn write_records(path: &Path, records: &[AppraisalRecord]) -> Result<()> {
    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read records previously written in the canonical layout.
pub fn read_records(path: &Path) -> Result<Vec<AppraisalRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AppraisalRecord =
            serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
        records.push(record);
    }
    Ok(records)
}

/// All ratings given to one dimension of one situation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMultiset {
    pub situation_id: String,
    pub dimension: DimensionId,
    /// Sorted ascending; one entry per annotator.
    pub ratings: Vec<Rating>,
}

impl RatingMultiset {
    pub fn new(
        situation_id: impl Into<String>,
        dimension: DimensionId,
        mut ratings: Vec<Rating>,
    ) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::EmptyMultiset);
        }
        ratings.sort_unstable();
        Ok(RatingMultiset {
            situation_id: situation_id.into(),
            dimension,
            ratings,
        })
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Counts per rating value.
    pub fn counts(&self) -> [u32; 5] {
        let mut counts = [0u32; 5];
        for r in &self.ratings {
            counts[r.index()] += 1;
        }
        counts
    }

    /// Arithmetic mean of the ratings.
    pub fn mean(&self) -> f64 {
        let sum: u64 = self.ratings.iter().map(|r| u64::from(r.value())).sum();
        sum as f64 / self.ratings.len() as f64
    }

    pub fn key(&self) -> (String, DimensionId) {
        (self.situation_id.clone(), self.dimension)
    }
}

/// Group annotations into one multiset per (situation, dimension).
///
/// Annotator identity is discarded at this point; group-level analyses work
/// from the records directly. Output is sorted by situation then dimension.
pub fn build_rating_multisets(records: &[AppraisalRecord]) -> Vec<RatingMultiset> {
    let mut grouped: BTreeMap<(String, DimensionId), Vec<Rating>> = BTreeMap::new();
    for record in records {
        for ann in &record.annotations {
            grouped
                .entry((record.situation_id.clone(), ann.dimension))
                .or_default()
                .push(ann.rating);
        }
    }
    grouped
        .into_iter()
        .map(|((situation_id, dimension), mut ratings)| {
            ratings.sort_unstable();
            RatingMultiset {
                situation_id,
                dimension,
                ratings,
            }
        })
        .collect()
}

/// Write multisets as JSONL, one object per (situation, dimension).
pub fn write_multisets(path: &Path, multisets: &[RatingMultiset]) -> Result<()> {
    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    for m in multisets {
        let line = serde_json::to_string(m).map_err(|e| Error::json(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read multisets previously written by [`write_multisets`].
pub fn read_multisets(path: &Path) -> Result<Vec<RatingMultiset>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut multisets = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: RatingMultiset = serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
        if m.ratings.is_empty() {
            return Err(Error::EmptyMultiset);
        }
        multisets.push(m);
    }
    Ok(multisets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn rescale_matches_enumeration() {
        // oracle: round-half-up via f64 arithmetic, then clamp
        for r in 1u8..=10 {
            let expect = ((f64::from(r) / 2.0 + 0.5).floor() as u8).clamp(1, 5);
            assert_eq!(rescale_rating(r).unwrap().value(), expect, "r = {r}");
        }
        assert_eq!(rescale_rating(10).unwrap().value(), 5);
        assert_eq!(rescale_rating(7).unwrap().value(), 4);
        assert_eq!(rescale_rating(1).unwrap().value(), 1);
    }

    #[test]
    fn rescale_monotone_and_surjective() {
        let values: Vec<u8> = (1..=10)
            .map(|r| rescale_rating(r).unwrap().value())
            .collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        let hit: BTreeSet<u8> = values.into_iter().collect();
        assert_eq!(hit, (1..=5).collect());
        assert!(rescale_rating(0).is_err());
        assert!(rescale_rating(11).is_err());
    }

    #[test]
    fn built_in_map_covers_published_rows() {
        assert_eq!(
            map_dimension(SourceDataset::FGE, "expectedness").unwrap(),
            DimensionId::PredictEvent
        );
        assert_eq!(
            map_dimension(SourceDataset::CovidET, "goal conduciveness").unwrap(),
            DimensionId::GoalSupport
        );
        assert_eq!(
            map_dimension(SourceDataset::EnVent, "suddenness").unwrap(),
            DimensionId::Suddenness
        );
    }

    #[test]
    fn map_is_identity_on_canonical_names() {
        for dim in DimensionId::ALL {
            assert_eq!(
                map_dimension(SourceDataset::EnVent, dim.name()).unwrap(),
                dim
            );
        }
    }

    #[test]
    fn unmapped_dimension_is_an_error() {
        let err = map_dimension(SourceDataset::FGE, "mind_body").unwrap_err();
        match err {
            Error::UnmappedDimension { dataset, name } => {
                assert_eq!(dataset, SourceDataset::FGE);
                assert_eq!(name, "mind_body");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn abbrevs_are_unique() {
        let codes: BTreeSet<&str> = DimensionId::ALL.iter().map(|d| d.abbrev()).collect();
        assert_eq!(codes.len(), DimensionId::ALL.len());
    }

    #[test]
    fn parses_small_canonical_file() {
        let row = concat!(
            r#"{"situation_id":"s1","text":"the event","source_dataset":"EnVent","annotations":["#,
            r#"{"annotator_id":"a1","dimension":"suddenness","rating":4},"#,
            r#"{"annotator_id":"a2","dimension":"suddenness","rating":2},"#,
            r#"{"annotator_id":"a1","dimension":"effort","rating":5},"#,
            r#"{"annotator_id":"a2","dimension":"effort","rating":5}]}"#
        );
        let f = tmp_jsonl(&[row]);
        let outcome = parse_records(
            f.path(),
            &DatasetLayout::canonical(),
            &DimensionMap::built_in(),
        )
        .unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.records[0].annotations.len(), 4);
        assert!(outcome.rejects.is_empty());
    }

    #[test]
    fn out_of_range_rating_rejects_row_only() {
        let good = r#"{"situation_id":"s1","text":"t","source_dataset":"EnVent","annotations":[{"annotator_id":"a1","dimension":"effort","rating":3}]}"#;
        let bad = r#"{"situation_id":"s2","text":"t","source_dataset":"EnVent","annotations":[{"annotator_id":"a1","dimension":"effort","rating":6}]}"#;
        let f = tmp_jsonl(&[good, bad]);
        let outcome = parse_records(
            f.path(),
            &DatasetLayout::canonical(),
            &DimensionMap::built_in(),
        )
        .unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.rejects.len(), 1);
        assert_eq!(outcome.rejects[0].line, 2);
        assert!(outcome.rejects[0].reason.contains("rating 6"));
    }

    #[test]
    fn duplicate_annotator_dimension_rejects_row() {
        let row = r#"{"situation_id":"s1","text":"t","source_dataset":"EnVent","annotations":[{"annotator_id":"a1","dimension":"effort","rating":3},{"annotator_id":"a1","dimension":"effort","rating":4}]}"#;
        let ok = r#"{"situation_id":"s2","text":"t","source_dataset":"EnVent","annotations":[{"annotator_id":"a1","dimension":"effort","rating":3}]}"#;
        let f = tmp_jsonl(&[row, ok]);
        let outcome = parse_records(
            f.path(),
            &DatasetLayout::canonical(),
            &DimensionMap::built_in(),
        )
        .unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.rejects.len(), 1);
        assert!(outcome.rejects[0].reason.contains("duplicate"));
    }

    #[test]
    fn unmapped_source_dimension_dropped_with_warning() {
        let row = r#"{"situation_id":"s1","text":"t","source_dataset":"FGE","annotations":[{"annotator_id":"a1","dimension":"mind_body","rating":9},{"annotator_id":"a1","dimension":"expectedness","rating":9}]}"#;
        let f = tmp_jsonl(&[row]);
        let outcome = parse_records(
            f.path(),
            &DatasetLayout::source(RatingScale::TenPoint),
            &DimensionMap::built_in(),
        )
        .unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.records[0].annotations.len(), 1);
        assert_eq!(
            outcome.records[0].annotations[0].dimension,
            DimensionId::PredictEvent
        );
        assert_eq!(outcome.records[0].annotations[0].rating.value(), 5);
        assert_eq!(outcome.dropped_dimensions.get("mind_body"), Some(&1));
    }

    #[test]
    fn zero_valid_records_is_an_error() {
        let f = tmp_jsonl(&["not json at all"]);
        let err = parse_records(
            f.path(),
            &DatasetLayout::canonical(),
            &DimensionMap::built_in(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoValidRecords { .. }));
    }

    #[test]
    fn multisets_group_by_situation_and_dimension() {
        let records = vec![
            AppraisalRecord {
                situation_id: "s1".into(),
                text: String::new(),
                source_dataset: SourceDataset::EnVent,
                annotations: [("a1", 2u8), ("a2", 5), ("a3", 5), ("a4", 4), ("a5", 1)]
                    .into_iter()
                    .map(|(id, r)| Annotation {
                        annotator_id: id.into(),
                        dimension: DimensionId::Suddenness,
                        rating: Rating::new(r).unwrap(),
                    })
                    .collect(),
                profiles: BTreeMap::new(),
            },
            AppraisalRecord {
                situation_id: "s2".into(),
                text: String::new(),
                source_dataset: SourceDataset::EnVent,
                annotations: vec![Annotation {
                    annotator_id: "a1".into(),
                    dimension: DimensionId::Suddenness,
                    rating: Rating::new(3).unwrap(),
                }],
                profiles: BTreeMap::new(),
            },
        ];
        let multisets = build_rating_multisets(&records);
        assert_eq!(multisets.len(), 2);
        let values: Vec<u8> = multisets[0].ratings.iter().map(|r| r.value()).collect();
        assert_eq!(values, vec![1, 2, 4, 5, 5]);
        assert_eq!(multisets[1].ratings.len(), 1);

        // annotation count is preserved
        let total_annotations: usize = records.iter().map(|r| r.annotations.len()).sum();
        let total_ratings: usize = multisets.iter().map(|m| m.len()).sum();
        assert_eq!(total_annotations, total_ratings);
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let row = r#"{"situation_id":"s1","text":"t","source_dataset":"CovidET","annotations":[{"annotator_id":"a1","dimension":"effort","rating":7}],"profiles":{"a1":{"age":20,"gender":"Female","tipi":{"calm":4}}}}"#;
        let f = tmp_jsonl(&[row]);
        let outcome = parse_records(
            f.path(),
            &DatasetLayout::source(RatingScale::TenPoint),
            &DimensionMap::built_in(),
        )
        .unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_records(out.path(), &outcome.records).unwrap();
        let back = read_records(out.path()).unwrap();
        assert_eq!(back, outcome.records);
    }
}
