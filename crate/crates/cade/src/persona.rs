//! Annotator profiles and prompt assembly.
//!
//! Structured demographics and ten-item Big-Five ratings are flattened into
//! natural-language sentences and spliced into one of four prompt variants:
//! vanilla, demographics, traits, or both.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DimensionId;
use crate::error::{Error, Result};

/// Demographic fields plus ten-item Big-Five ratings, all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ethnicity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education: Option<String>,
    /// Item descriptor -> rating in [1, 7].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tipi: BTreeMap<String, u8>,
}

/// The ten trait-item descriptors, paired per Big-Five trait.
pub const TRAIT_PAIRS: [(&str, &str, &str); 5] = [
    ("openness", "open", "conventional"),
    ("conscientiousness", "dependable", "disorganized"),
    ("extraversion", "extraverted", "quiet"),
    ("agreeableness", "sympathetic", "critical"),
    ("emotional stability", "calm", "anxious"),
];

fn is_tipi_item(name: &str) -> bool {
    TRAIT_PAIRS.iter().any(|(_, a, b)| *a == name || *b == name)
}

impl PersonaProfile {
    /// Check item vocabulary and rating ranges.
    pub fn validate(&self) -> Result<()> {
        for (item, &rating) in &self.tipi {
            if !is_tipi_item(item) {
                return Err(Error::Config(format!("unknown trait item {item:?}")));
            }
            if !(1..=7).contains(&rating) {
                return Err(Error::RatingOutOfRange {
                    value: i64::from(rating),
                    min: 1,
                    max: 7,
                });
            }
        }
        Ok(())
    }

    pub fn has_demographics(&self) -> bool {
        self.age.is_some()
            && self.gender.is_some()
            && self.ethnicity.is_some()
            && self.education.is_some()
    }
}

/// Flatten demographics into the fixed sentence form.
///
/// Gender and education are lowercased; ethnicity keeps its casing.
pub fn flatten_demographics(p: &PersonaProfile) -> Result<String> {
    let age = p.age.ok_or(Error::IncompleteProfile { missing: "age" })?;
    let ethnicity = p.ethnicity.as_deref().ok_or(Error::IncompleteProfile {
        missing: "ethnicity",
    })?;
    let gender = p
        .gender
        .as_deref()
        .ok_or(Error::IncompleteProfile { missing: "gender" })?;
    let education = p.education.as_deref().ok_or(Error::IncompleteProfile {
        missing: "education",
    })?;
    Ok(format!(
        "You are a {age} years old {ethnicity} {} whose education level is \"{}\".",
        gender.to_lowercase(),
        education.to_lowercase()
    ))
}

/// Reduce the ten trait items to at most five descriptors.
///
/// For each pair the higher-rated item wins; ties drop the trait. Pairs with
/// a missing item are not considered. Output order follows the trait order
/// (openness first).
pub fn reduce_tipi(tipi: &BTreeMap<String, u8>) -> Vec<&'static str> {
    let mut out = Vec::new();
    for (_, first, second) in TRAIT_PAIRS {
        let (Some(&a), Some(&b)) = (tipi.get(first), tipi.get(second)) else {
            continue;
        };
        if a > b {
            out.push(first);
        } else if b > a {
            out.push(second);
        }
    }
    out
}

/// Trait descriptors joined into the persona sentence, or `None` when every
/// pair tied or was absent.
pub fn traits_sentence(tipi: &BTreeMap<String, u8>) -> Option<String> {
    let descriptors = reduce_tipi(tipi);
    if descriptors.is_empty() {
        None
    } else {
        Some(format!("You are a {} person.", descriptors.join(", ")))
    }
}

/// Prompt condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Demo,
    Traits,
    DemoTraits,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Demo => "demo",
            Variant::Traits => "traits",
            Variant::DemoTraits => "demo_traits",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully assembled system/user message pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub variant: Variant,
}

const BASE_INSTRUCTION: &str = "Put yourself in the shoes of the writer at the time when the \
event happened, and try to reconstruct how that [Situation] was perceived. How much do these \
statements apply?";

const SYSTEM_SCALE: &str = "(1 means \"Not at all\" and 5 means \"Extremely\")";

/// The rating-format sentence inside the user instruction; calibration
/// prompts extend it in place.
pub const RATING_FORMAT_INSTRUCTION: &str =
    "Provide your rating in the following format: \"Rating: [Score]\".";

const USER_INSTRUCTION: &str = "Please rate the situation according to the statements using \
the Likert scale. The scale ranges from 1 to 5 where 1 means 'Not at all' and 5 means \
'Extremely'. Provide your rating in the following format: \"Rating: [Score]\". Do not add any \
explanation or elaboration to your answer.";

fn persona_prefix(profile: Option<&PersonaProfile>, variant: Variant) -> Result<String> {
    let profile_or_err =
        |kind: &'static str| profile.ok_or(Error::VariantRequiresProfile { variant: kind });
    let mut parts: Vec<String> = Vec::new();
    match variant {
        Variant::Vanilla => {}
        Variant::Demo => {
            parts.push(flatten_demographics(profile_or_err("demo")?)?);
        }
        Variant::Traits => {
            let p = profile_or_err("traits")?;
            if let Some(sentence) = traits_sentence(&p.tipi) {
                parts.push(sentence);
            }
        }
        Variant::DemoTraits => {
            let p = profile_or_err("demo_traits")?;
            parts.push(flatten_demographics(p)?);
            if let Some(sentence) = traits_sentence(&p.tipi) {
                parts.push(sentence);
            }
        }
    }
    if parts.is_empty() {
        Ok(String::new())
    } else {
        Ok(parts.join(" ") + " ")
    }
}

/// Assemble the prompt for one (situation, statement) pair.
///
/// `statement` is the canonical statement text of one appraisal dimension;
/// see [`StatementSet`]. The output is deterministic: equal inputs produce
/// byte-identical bundles.
pub fn build_prompt(
    situation: &str,
    statement: &str,
    profile: Option<&PersonaProfile>,
    variant: Variant,
) -> Result<PromptBundle> {
    let prefix = persona_prefix(profile, variant)?;
    let system = format!("{prefix}{BASE_INSTRUCTION} {SYSTEM_SCALE}");
    let user = format!(
        "{prefix}{BASE_INSTRUCTION} {USER_INSTRUCTION}\n\n[Situation]\n{situation}\n\n[Experiencer's Feeling]\n{statement}"
    );
    Ok(PromptBundle {
        system,
        user,
        variant,
    })
}

/// Statement texts for the 21 dimensions, user-overridable.
#[derive(Debug, Clone)]
pub struct StatementSet {
    statements: BTreeMap<DimensionId, String>,
}

const BUILT_IN_STATEMENTS: &str = include_str!("resources/statements.json");

impl StatementSet {
    /// The statements shipped with the toolkit.
    pub fn built_in() -> Self {
        Self::from_json(BUILT_IN_STATEMENTS).expect("built-in statements parse")
    }

    /// Load replacement statements from JSON `{dimension_name: text}`.
    /// Missing dimensions fall back to the built-in text.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut set = Self::built_in();
        let overrides: BTreeMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
        for (name, text) in overrides {
            let dim = DimensionId::from_name(&name)
                .ok_or_else(|| Error::Config(format!("{name:?} is not a dimension name")))?;
            set.statements.insert(dim, text);
        }
        Ok(set)
    }

    fn from_json(raw: &str) -> Result<Self> {
        let parsed: BTreeMap<String, String> = serde_json::from_str(raw)
            .map_err(|e| Error::Config(format!("invalid statements resource: {e}")))?;
        let mut statements = BTreeMap::new();
        for (name, text) in parsed {
            let dim = DimensionId::from_name(&name)
                .ok_or_else(|| Error::Config(format!("{name:?} is not a dimension name")))?;
            statements.insert(dim, text);
        }
        for dim in DimensionId::ALL {
            if !statements.contains_key(&dim) {
                return Err(Error::Config(format!("no statement for {dim}")));
            }
        }
        Ok(StatementSet { statements })
    }

    pub fn get(&self, dimension: DimensionId) -> &str {
        &self.statements[&dimension]
    }
}
