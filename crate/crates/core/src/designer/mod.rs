// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment manifests: the texts fed to the model, where to read
//! activations from, and the labels/groups the probes use.
//!
//! Target spans are half-open ranges of Unicode scalar values (`char`
//! indices) so a Python exporter can slice `text[start:end]` directly.

mod articles;
mod bury;
mod ingredients;
mod templates;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use articles::ArticleRule;
pub use bury::{bury, BuryOptions, BuryPosition, DEFAULT_CONNECTOR};
pub use ingredients::{Analogy, FoodAnimal, Ingredients, ItemFeature, ScenePair, WordPair};
pub use templates::{
    build_analogy_manifest, build_food_manifest, build_item_manifest, build_pair_manifest, build_scene_manifest,
    FoodOrder, ItemSelection, SceneTemplate,
};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("ingredient table {0} is empty")]
    EmptyTable(&'static str),
    #[error("{table} row {row}: {msg}")]
    BadRow {
        table: &'static str,
        row: usize,
        msg: String,
    },
    #[error("score {score} for ({scene}, {object}) outside [1, 4]")]
    ScoreOutOfRange { scene: String, object: String, score: f64 },
    #[error("animal class {0:?} is neither herbivore nor carnivore")]
    AnimalClass(String),
    #[error("analogy {index} repeats a term: {terms:?}")]
    DuplicateTerm { index: usize, terms: [String; 4] },
    #[error("filler text is empty")]
    EmptyFiller,
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("unknown experiment {given:?}; known: {known}")]
    UnknownExperiment { given: String, known: String },
    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Half-open character range `[start, end)` into an example's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn shifted(self, by: usize) -> Self {
        Self::new(self.start + by, self.end + by)
    }

    pub fn slice(self, text: &str) -> String {
        text.chars().skip(self.start).take(self.end - self.start).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Orig,
    Flipped,
    Valid,
    EasyInvalid,
    HardInvalid,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Orig => "orig",
            Variant::Flipped => "flipped",
            Variant::Valid => "valid",
            Variant::EasyInvalid => "easy_invalid",
            Variant::HardInvalid => "hard_invalid",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "orig" => Variant::Orig,
            "flipped" => Variant::Flipped,
            "valid" => Variant::Valid,
            "easy_invalid" => Variant::EasyInvalid,
            "hard_invalid" => Variant::HardInvalid,
            other => return Err(DesignError::Invalid(format!("unknown variant {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    pub id: String,
    pub text: String,
    /// Word(s) whose activations are probed.
    pub target_span: Vec<CharSpan>,
    /// Alternative span sets, e.g. `all_items` for the four analogy words.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_spans: BTreeMap<String, Vec<CharSpan>>,
    pub labels: BTreeMap<String, f64>,
    pub groups: BTreeMap<String, String>,
    pub variant: Variant,
    /// Set when the example was buried in filler text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burial: Option<BuryPosition>,
}

impl ExampleRecord {
    /// A label-free record whose target is the whole text; used by fixtures.
    pub fn bare(id: &str, text: &str) -> Self {
        Self {
            id: id.to_string(),
            text: text.to_string(),
            target_span: vec![CharSpan::new(0, text.chars().count())],
            extra_spans: BTreeMap::new(),
            labels: BTreeMap::new(),
            groups: BTreeMap::new(),
            variant: Variant::Orig,
            burial: None,
        }
    }

    pub fn target_text(&self) -> Vec<String> {
        self.target_span.iter().map(|s| s.slice(&self.text)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub experiment_id: String,
    pub template_id: String,
    pub examples: Vec<ExampleRecord>,
}

impl Manifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.id.as_str())
    }

    pub fn label_keys(&self) -> BTreeSet<String> {
        self.examples
            .first()
            .map(|e| e.labels.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn group_keys(&self) -> BTreeSet<String> {
        self.examples
            .first()
            .map(|e| e.groups.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Checks id uniqueness, shared label/group keys and span placement.
    pub fn check(&self) -> Result<(), DesignError> {
        let mut seen = HashSet::with_capacity(self.examples.len());
        let labels = self.label_keys();
        let groups = self.group_keys();
        for e in &self.examples {
            if !seen.insert(e.id.as_str()) {
                return Err(DesignError::DuplicateId(e.id.clone()));
            }
            if !e.labels.keys().eq(labels.iter()) || !e.groups.keys().eq(groups.iter()) {
                return Err(DesignError::Invalid(format!(
                    "example {:?} has different label/group keys",
                    e.id
                )));
            }
            if e.target_span.is_empty() {
                return Err(DesignError::Invalid(format!("example {:?} has no target", e.id)));
            }
            let spans = e.target_span.iter().chain(e.extra_spans.values().flatten());
            for span in spans {
                if !covers_whole_words(&e.text, *span) {
                    return Err(DesignError::Invalid(format!(
                        "example {:?}: span {}..{} does not cover whole words of {:?}",
                        e.id, span.start, span.end, e.text
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DesignError> {
        let m: Manifest = serde_json::from_str(s)?;
        m.check()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DesignError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|source| DesignError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DesignError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| DesignError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Word boundaries: whitespace or text edges; a span may stop before
/// trailing punctuation ("tree," has the word "tree").
pub fn covers_whole_words(text: &str, span: CharSpan) -> bool {
    let chars: Vec<char> = text.chars().collect();
    if span.start >= span.end || span.end > chars.len() {
        return false;
    }
    let inner = &chars[span.start..span.end];
    if inner.first().is_some_and(|c| c.is_whitespace()) || inner.last().is_some_and(|c| c.is_whitespace()) {
        return false;
    }
    let left_ok = span.start == 0 || chars[span.start - 1].is_whitespace();
    let right_ok = span.end == chars.len()
        || chars[span.end].is_whitespace()
        || chars[span.end..]
            .iter()
            .take_while(|c| !c.is_whitespace())
            .all(|c| c.is_ascii_punctuation());
    left_ok && right_ok
}

/// Experiments the designer can build from ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Items,
    SceneInScene,
    SceneAndForm,
    Pairs,
    FoodFirst,
    FoodSecond,
    Analogies,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Items,
        Experiment::SceneInScene,
        Experiment::SceneAndForm,
        Experiment::Pairs,
        Experiment::FoodFirst,
        Experiment::FoodSecond,
        Experiment::Analogies,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::Items => "exp1",
            Experiment::SceneInScene => "exp2a_in_scene",
            Experiment::SceneAndForm => "exp2a_and_form",
            Experiment::Pairs => "exp2b",
            Experiment::FoodFirst => "exp2c_food_first",
            Experiment::FoodSecond => "exp2c_food_second",
            Experiment::Analogies => "exp3",
        }
    }

    /// Connector inserted before suffix filler so the opening sentence stays grammatical.
    pub fn default_connector(self) -> &'static str {
        match self {
            Experiment::Items => "is here",
            _ => DEFAULT_CONNECTOR,
        }
    }

    pub fn known_ids() -> String {
        Self::ALL.iter().map(|e| e.id()).collect::<Vec<_>>().join(", ")
    }

    pub fn build(self, ing: &Ingredients, sel: &ItemSelection) -> Result<Manifest, DesignError> {
        match self {
            Experiment::Items => build_item_manifest(ing, sel),
            Experiment::SceneInScene => build_scene_manifest(ing, SceneTemplate::InScene),
            Experiment::SceneAndForm => build_scene_manifest(ing, SceneTemplate::AndForm),
            Experiment::Pairs => build_pair_manifest(ing),
            Experiment::FoodFirst => build_food_manifest(ing, FoodOrder::FoodFirst),
            Experiment::FoodSecond => build_food_manifest(ing, FoodOrder::FoodSecond),
            Experiment::Analogies => build_analogy_manifest(ing),
        }
    }
}

impl FromStr for Experiment {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| DesignError::UnknownExperiment {
                given: s.to_string(),
                known: Self::known_ids(),
            })
    }
}

/// Lowercase id fragment: whitespace collapsed to `_`.
pub(crate) fn slug(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_word_spans() {
        let t = "Like a seed and a tree, an egg";
        assert!(covers_whole_words(t, CharSpan::new(7, 11)));
        assert!(covers_whole_words(t, CharSpan::new(18, 22)));
        assert!(!covers_whole_words(t, CharSpan::new(8, 11)));
        assert!(!covers_whole_words(t, CharSpan::new(7, 10)));
        assert!(!covers_whole_words(t, CharSpan::new(6, 11)));
        assert!(!covers_whole_words(t, CharSpan::new(7, 40)));
    }

    #[test]
    fn experiment_ids_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.id().parse::<Experiment>().unwrap(), e);
        }
        let err = "exp9".parse::<Experiment>().unwrap_err().to_string();
        assert!(err.contains("exp2b"));
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let m = Manifest {
            experiment_id: "x".into(),
            template_id: "x".into(),
            examples: vec![ExampleRecord::bare("a", "A cat"), ExampleRecord::bare("a", "A dog")],
        };
        assert!(matches!(m.check(), Err(DesignError::DuplicateId(_))));
    }

    #[test]
    fn span_slices_by_chars() {
        assert_eq!(CharSpan::new(2, 5).slice("A café!"), "caf");
        assert_eq!(CharSpan::new(2, 6).slice("A café!"), "café");
    }
}
