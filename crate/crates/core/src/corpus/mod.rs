//! Narratives, label sequences and annotation records, plus the corpus file
//! format and the dataset utilities built on them.

mod annotations;
mod io;
mod segment;
mod split;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use annotations::merge_annotations;
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus, CorpusRecord};
pub use segment::{segment_sentences, tokenize};
pub use split::{split_corpus, CorpusSplit, DEFAULT_RATIOS};
pub use stats::{corpus_stats, normalized_position, position_bin, CorpusStats, PositionHistogram};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("narrative `{id}`: {got} labels for {expected} sentences")]
    LabelLength { id: String, expected: usize, got: usize },
    #[error("narrative `{0}` has no sentences")]
    EmptyNarrative(String),
    #[error("duplicate narrative id `{0}`")]
    DuplicateId(String),
    #[error("narrative `{0}` has no gold labels")]
    MissingLabels(String),
    #[error("split ratios sum to {0}, expected 1")]
    Ratios(f64),
    #[error("corpus of {0} narratives is too small to split")]
    TooSmall(usize),
    #[error("annotation records span several narratives: {0:?}")]
    MixedNarratives(Vec<String>),
    #[error("no annotation records to merge")]
    NoRecords,
}

/// Sentence role within a narrative. The declaration order is the argmax
/// tie-break order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[default]
    None,
    Climax,
    Resolution,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::None, Label::Climax, Label::Resolution];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::None => "none",
            Label::Climax => "climax",
            Label::Resolution => "resolution",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self { index, text, tokens }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Narrative {
    pub id: String,
    pub title: String,
    pub sentences: Vec<Sentence>,
    pub meta: BTreeMap<String, String>,
}

impl Narrative {
    /// Builds a narrative from pre-segmented sentence texts.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        title: impl Into<String>,
        sentences: impl IntoIterator<Item = S>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let sentences: Vec<Sentence> = sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| Sentence::new(i, s))
            .collect();
        if sentences.is_empty() {
            return Err(CorpusError::EmptyNarrative(id));
        }
        Ok(Self {
            id,
            title: title.into(),
            sentences,
            meta: BTreeMap::new(),
        })
    }

    /// Segments `body` into sentences.
    pub fn from_text(id: impl Into<String>, title: impl Into<String>, body: &str) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            sentences: segment_sentences(body),
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }

    /// Copy with sentence `index` replaced by `text`.
    pub fn with_sentence(&self, index: usize, text: &str) -> Narrative {
        let mut out = self.clone();
        out.sentences[index] = Sentence::new(index, text);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub narrative_id: String,
    pub labels: Vec<Label>,
}

impl LabelSequence {
    pub fn new(narrative_id: impl Into<String>, labels: Vec<Label>) -> Self {
        Self {
            narrative_id: narrative_id.into(),
            labels,
        }
    }

    pub fn all_none(narrative_id: impl Into<String>, len: usize) -> Self {
        Self::new(narrative_id, vec![Label::None; len])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices_of(&self, label: Label) -> BTreeSet<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }
}

/// One annotator's highlights for one narrative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub narrative_id: String,
    pub annotator_id: String,
    #[serde(default)]
    pub climax_indices: BTreeSet<usize>,
    #[serde(default)]
    pub resolution_indices: BTreeSet<usize>,
    #[serde(default)]
    pub no_climax: bool,
    #[serde(default)]
    pub no_resolution: bool,
    pub submitted_at: DateTime<Utc>,
}

/// A single invariant violation on an [`AnnotationRecord`] field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl AnnotationRecord {
    pub fn new(
        narrative_id: impl Into<String>,
        annotator_id: impl Into<String>,
        climax: impl IntoIterator<Item = usize>,
        resolution: impl IntoIterator<Item = usize>,
    ) -> Self {
        let climax_indices: BTreeSet<usize> = climax.into_iter().collect();
        let resolution_indices: BTreeSet<usize> = resolution.into_iter().collect();
        Self {
            narrative_id: narrative_id.into(),
            annotator_id: annotator_id.into(),
            no_climax: climax_indices.is_empty(),
            no_resolution: resolution_indices.is_empty(),
            climax_indices,
            resolution_indices,
            submitted_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    /// Checks the record against a narrative of `sentence_count` sentences.
    pub fn validate(&self, sentence_count: usize) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        let mut push = |field: &str, message: String| {
            errors.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        if self.annotator_id.trim().is_empty() {
            push("annotator_id", "must not be empty".into());
        }
        if self.no_climax && !self.climax_indices.is_empty() {
            push("climax_indices", "must be empty when no_climax is set".into());
        }
        if self.no_resolution && !self.resolution_indices.is_empty() {
            push("resolution_indices", "must be empty when no_resolution is set".into());
        }
        if let Some(i) = self.climax_indices.iter().find(|i| **i >= sentence_count) {
            push("climax_indices", format!("index {i} out of range for {sentence_count} sentences"));
        }
        if let Some(i) = self.resolution_indices.iter().find(|i| **i >= sentence_count) {
            push("resolution_indices", format!("index {i} out of range for {sentence_count} sentences"));
        }
        if let Some(i) = self.climax_indices.intersection(&self.resolution_indices).next() {
            push("resolution_indices", format!("sentence {i} is also marked as climax"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Single category for sentence `i`, climax taking precedence.
    pub fn category(&self, i: usize) -> Label {
        if self.climax_indices.contains(&i) {
            Label::Climax
        } else if self.resolution_indices.contains(&i) {
            Label::Resolution
        } else {
            Label::None
        }
    }

    pub fn indices(&self, label: Label) -> &BTreeSet<usize> {
        match label {
            Label::Climax => &self.climax_indices,
            Label::Resolution => &self.resolution_indices,
            Label::None => panic!("annotation records only hold climax and resolution sets"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusEntry {
    pub narrative: Narrative,
    pub labels: Option<LabelSequence>,
}

/// Narratives in file order, each with optional gold labels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails on duplicate ids or label sequences of the wrong length.
    pub fn from_entries(entries: Vec<CorpusEntry>) -> Result<Self, CorpusError> {
        let mut c = Corpus::new();
        for e in entries {
            c.push(e.narrative, e.labels)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, narrative: Narrative, labels: Option<LabelSequence>) -> Result<(), CorpusError> {
        if narrative.is_empty() {
            return Err(CorpusError::EmptyNarrative(narrative.id));
        }
        if self.get(&narrative.id).is_some() {
            return Err(CorpusError::DuplicateId(narrative.id));
        }
        if let Some(l) = &labels {
            if l.len() != narrative.len() {
                return Err(CorpusError::LabelLength {
                    expected: narrative.len(),
                    id: narrative.id,
                    got: l.len(),
                });
            }
        }
        self.entries.push(CorpusEntry { narrative, labels });
        Ok(())
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn narratives(&self) -> impl Iterator<Item = &Narrative> {
        self.entries.iter().map(|e| &e.narrative)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.narrative.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.narrative.id == id)
    }

    /// Entries whose ids appear in `ids`, in `ids` order; unknown ids are skipped.
    pub fn subset(&self, ids: &[String]) -> Corpus {
        let index: BTreeMap<&str, &CorpusEntry> =
            self.entries.iter().map(|e| (e.narrative.id.as_str(), e)).collect();
        Corpus {
            entries: ids.iter().filter_map(|id| index.get(id.as_str()).map(|e| (*e).clone())).collect(),
        }
    }

    /// Gold-labelled pairs; errors on the first entry without labels.
    pub fn labelled(&self) -> Result<Vec<(&Narrative, &LabelSequence)>, CorpusError> {
        self.entries
            .iter()
            .map(|e| {
                e.labels
                    .as_ref()
                    .map(|l| (&e.narrative, l))
                    .ok_or_else(|| CorpusError::MissingLabels(e.narrative.id.clone()))
            })
            .collect()
    }
}
