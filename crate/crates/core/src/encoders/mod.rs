//! Per-sentence embedding channels: semantics (`xSem`) and the protagonist's
//! intent (`xIntent`) and emotional reaction (`xReact`).
//!
//! Pretrained models plug in through [`AdapterRegistry`]; the reference
//! encoders in [`reference`] need no downloads and are fully deterministic.

mod cache;
pub mod reference;
mod registry;
mod token;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Narrative;
use crate::neuralcore::Tensor;

pub use cache::{CacheKey, CachedChannels, EmbeddingCache, CACHE_ENV};
pub use reference::{ReferenceEncoder, ReferenceMentalEncoder, ReferenceMode, ReferenceTokenModel};
pub use registry::{AdapterRegistry, MentalFactory, SemanticFactory, KNOWN_ADAPTERS};
pub use token::{build_token_input, TokenContextualEncoder, TokenInput, TokenModel, CLS, SEP};

pub const DEFAULT_WIDTH: usize = 96;
pub const DEFAULT_ENTITY: &str = "I";
/// Narrative meta key naming the protagonist, overriding the default entity.
pub const PROTAGONIST_KEY: &str = "protagonist";

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("input of {tokens} tokens exceeds the encoder context capacity of {limit}")]
    ContextCapacity { tokens: usize, limit: usize },
    #[error("channel widths differ: {0:?}")]
    WidthMismatch(Vec<usize>),
    #[error("adapter `{0}` is not available in this build")]
    AdapterUnavailable(String),
    #[error("unknown adapter `{0}`")]
    UnknownAdapter(String),
    #[error("entity must not be empty")]
    EmptyEntity,
    #[error("no channels for narrative `{0}`")]
    MissingNarrative(String),
    #[error("{0}")]
    Shape(String),
    #[error("embedding cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    XSem,
    XIntent,
    XReact,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::XSem, Channel::XIntent, Channel::XReact];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::XSem => "xsem",
            Channel::XIntent => "xintent",
            Channel::XReact => "xreact",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.as_str() == s.to_ascii_lowercase())
    }
}

/// Mental-state attribute queried for the protagonist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MentalAttribute {
    XIntent,
    XReact,
}

impl MentalAttribute {
    pub fn as_str(self) -> &'static str {
        match self {
            MentalAttribute::XIntent => "xIntent",
            MentalAttribute::XReact => "xReact",
        }
    }
}

/// `L × d` matrix of sentence vectors for one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub channel: Channel,
    pub rows: Tensor,
}

impl EmbeddingMatrix {
    pub fn new(channel: Channel, rows: Tensor) -> Result<Self, EncoderError> {
        if rows.shape().len() != 2 {
            return Err(EncoderError::Shape(format!("embedding matrix must be 2-D, got {:?}", rows.shape())));
        }
        if !rows.is_finite() {
            return Err(EncoderError::Shape(format!("non-finite {} embedding", channel.as_str())));
        }
        Ok(Self { channel, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }
}

/// The three channels for one narrative, row-aligned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelTriple {
    pub sem: EmbeddingMatrix,
    pub intent: EmbeddingMatrix,
    pub react: EmbeddingMatrix,
}

impl ChannelTriple {
    pub fn new(sem: Tensor, intent: Tensor, react: Tensor) -> Result<Self, EncoderError> {
        let t = ChannelTriple {
            sem: EmbeddingMatrix::new(Channel::XSem, sem)?,
            intent: EmbeddingMatrix::new(Channel::XIntent, intent)?,
            react: EmbeddingMatrix::new(Channel::XReact, react)?,
        };
        let widths = vec![t.sem.width(), t.intent.width(), t.react.width()];
        if widths.iter().any(|&w| w != widths[0]) {
            return Err(EncoderError::WidthMismatch(widths));
        }
        let lens = [t.sem.len(), t.intent.len(), t.react.len()];
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(EncoderError::Shape(format!("channel row counts differ: {lens:?}")));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.sem.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.sem.width()
    }

    pub fn get(&self, channel: Channel) -> &EmbeddingMatrix {
        match channel {
            Channel::XSem => &self.sem,
            Channel::XIntent => &self.intent,
            Channel::XReact => &self.react,
        }
    }
}

/// Selects the encoder family behind the semantic channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    TokenContextual,
    SentenceLevel,
    Reference,
}

impl EncoderKind {
    pub fn adapter_key(self) -> &'static str {
        match self {
            EncoderKind::TokenContextual => "xsem.token",
            EncoderKind::SentenceLevel => "xsem.sentence",
            EncoderKind::Reference => "xsem.reference",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub width: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Reference,
            width: DEFAULT_WIDTH,
            seed: 0,
        }
    }
}

/// One mental-state query: sentence `i`, the sentences before it, the entity
/// whose state is wanted and which attribute.
#[derive(Clone, Debug)]
pub struct MentalStateRequest<'a> {
    pub sentence: &'a str,
    pub context: Vec<&'a str>,
    pub entity: &'a str,
    pub attribute: MentalAttribute,
}

pub trait SentenceEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn width(&self) -> usize;
    /// One row per sentence of the narrative.
    fn encode(&self, narrative: &Narrative) -> Result<Tensor, EncoderError>;
    /// A standalone text encoded on its own.
    fn encode_text(&self, text: &str) -> Result<Vec<f64>, EncoderError>;
    /// Input features for the story classifier.
    fn classifier_features(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        self.encode_text(text)
    }
    fn feature_width(&self) -> usize {
        self.width()
    }
}

pub trait MentalStateEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn width(&self) -> usize;
    fn encode_state(&self, request: &MentalStateRequest<'_>) -> Result<Vec<f64>, EncoderError>;

    /// Row `i` sees sentence `i` and only the sentences before it.
    fn encode_story(
        &self,
        narrative: &Narrative,
        entity: &str,
        attribute: MentalAttribute,
    ) -> Result<Tensor, EncoderError> {
        let texts: Vec<&str> = narrative.texts().collect();
        let mut data = Vec::with_capacity(texts.len() * self.width());
        for i in 0..texts.len() {
            let request = MentalStateRequest {
                sentence: texts[i],
                context: texts[..i].to_vec(),
                entity,
                attribute,
            };
            data.extend(self.encode_state(&request)?);
        }
        Tensor::matrix(texts.len(), self.width(), data).map_err(|e| EncoderError::Shape(e.to_string()))
    }
}

/// Anything that can hand the model the channel triple for a narrative.
pub trait ChannelSource: Send + Sync {
    fn channels(&self, narrative: &Narrative) -> Result<ChannelTriple, EncoderError>;
    fn width(&self) -> usize;
    /// Whether edited sentence text is reflected in the output; precomputed
    /// channels ignore text, so augmentation is skipped for them.
    fn reads_text(&self) -> bool {
        true
    }
}

/// Semantic encoder plus mental-state encoder for one protagonist.
#[derive(Clone)]
pub struct EncoderSet {
    pub semantic: Arc<dyn SentenceEncoder>,
    pub mental: Arc<dyn MentalStateEncoder>,
    pub entity: String,
}

impl std::fmt::Debug for EncoderSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncoderSet")
            .field("semantic", &self.semantic.name())
            .field("mental", &self.mental.name())
            .field("entity", &self.entity)
            .finish()
    }
}

impl EncoderSet {
    pub fn new(
        semantic: Arc<dyn SentenceEncoder>,
        mental: Arc<dyn MentalStateEncoder>,
    ) -> Result<Self, EncoderError> {
        if semantic.width() != mental.width() {
            return Err(EncoderError::WidthMismatch(vec![semantic.width(), mental.width()]));
        }
        Ok(Self {
            semantic,
            mental,
            entity: DEFAULT_ENTITY.to_string(),
        })
    }

    /// Reference semantic and mental encoders sharing `width` and `seed`.
    pub fn reference(width: usize, seed: u64) -> Self {
        Self::new(
            Arc::new(ReferenceEncoder::new(width, seed, ReferenceMode::TokenContextual)),
            Arc::new(ReferenceMentalEncoder::new(width, seed)),
        )
        .expect("reference encoders share a width")
    }

    pub fn with_entity(mut self, entity: impl Into<String>) -> Self {
        self.entity = entity.into();
        self
    }

    pub fn width(&self) -> usize {
        self.semantic.width()
    }

    pub fn encode_channels(&self, narrative: &Narrative, entity: Option<&str>) -> Result<ChannelTriple, EncoderError> {
        let entity = entity.unwrap_or(&self.entity);
        if entity.trim().is_empty() {
            return Err(EncoderError::EmptyEntity);
        }
        let sem = self.semantic.encode(narrative)?;
        let intent = self.mental.encode_story(narrative, entity, MentalAttribute::XIntent)?;
        let react = self.mental.encode_story(narrative, entity, MentalAttribute::XReact)?;
        ChannelTriple::new(sem, intent, react)
    }
}

impl EncoderSet {
    /// The narrative's `protagonist` meta entry, else this set's entity.
    pub fn entity_for<'a>(&'a self, narrative: &'a Narrative) -> &'a str {
        narrative.meta.get(PROTAGONIST_KEY).map_or(self.entity.as_str(), String::as_str)
    }
}

impl ChannelSource for EncoderSet {
    fn channels(&self, narrative: &Narrative) -> Result<ChannelTriple, EncoderError> {
        self.encode_channels(narrative, Some(self.entity_for(narrative)))
    }

    fn width(&self) -> usize {
        EncoderSet::width(self)
    }
}

/// Channels supplied directly, keyed by narrative id.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedChannels {
    width: usize,
    by_id: BTreeMap<String, ChannelTriple>,
}

impl PrecomputedChannels {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            by_id: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, channels: ChannelTriple) -> Result<(), EncoderError> {
        if channels.width() != self.width {
            return Err(EncoderError::WidthMismatch(vec![self.width, channels.width()]));
        }
        self.by_id.insert(id.into(), channels);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ChannelTriple> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl ChannelSource for PrecomputedChannels {
    fn channels(&self, narrative: &Narrative) -> Result<ChannelTriple, EncoderError> {
        let c = self
            .by_id
            .get(&narrative.id)
            .ok_or_else(|| EncoderError::MissingNarrative(narrative.id.clone()))?;
        if c.len() != narrative.len() {
            return Err(EncoderError::Shape(format!(
                "narrative `{}` has {} sentences but {} channel rows",
                narrative.id,
                narrative.len(),
                c.len()
            )));
        }
        Ok(c.clone())
    }

    fn width(&self) -> usize {
        self.width
    }

    fn reads_text(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn story(sentences: &[&str]) -> Narrative {
        Narrative::new("s", "t", sentences.to_vec()).unwrap()
    }

    #[test]
    fn channel_shapes_and_default_entity() {
        let enc = EncoderSet::reference(16, 3);
        assert_eq!(enc.entity, "I");
        let n = story(&["I woke up.", "It rained.", "I ran.", "I slipped.", "I laughed."]);
        let c = enc.encode_channels(&n, None).unwrap();
        for m in [&c.sem, &c.intent, &c.react] {
            assert_eq!(m.rows.shape(), &[5, 16]);
        }
        let explicit = enc.encode_channels(&n, Some("I")).unwrap();
        assert_eq!(explicit, c);
        assert!(matches!(enc.encode_channels(&n, Some(" ")), Err(EncoderError::EmptyEntity)));
    }

    #[test]
    fn editing_a_later_sentence_leaves_earlier_mental_rows_alone() {
        let enc = EncoderSet::reference(16, 3);
        let n = story(&["I woke up.", "It rained.", "I ran.", "I slipped.", "I laughed."]);
        let edited = n.with_sentence(4, "Then a dragon ate the moon.");
        let a = enc.encode_channels(&n, None).unwrap();
        let b = enc.encode_channels(&edited, None).unwrap();
        for i in 0..4 {
            assert_eq!(a.intent.row(i), b.intent.row(i));
            assert_eq!(a.react.row(i), b.react.row(i));
        }
        assert_ne!(a.intent.row(4), b.intent.row(4));
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let r = EncoderSet::new(
            Arc::new(ReferenceEncoder::new(8, 0, ReferenceMode::SentenceLevel)),
            Arc::new(ReferenceMentalEncoder::new(10, 0)),
        );
        assert!(matches!(r, Err(EncoderError::WidthMismatch(_))));
        let t = ChannelTriple::new(Tensor::zeros(&[2, 4]), Tensor::zeros(&[2, 4]), Tensor::zeros(&[2, 5]));
        assert!(matches!(t, Err(EncoderError::WidthMismatch(_))));
    }

    #[test]
    fn precomputed_channels_check_ids_and_lengths() {
        let mut p = PrecomputedChannels::new(4);
        let t = ChannelTriple::new(Tensor::zeros(&[2, 4]), Tensor::zeros(&[2, 4]), Tensor::zeros(&[2, 4])).unwrap();
        p.insert("s", t).unwrap();
        assert!(p.channels(&story(&["a.", "b."])).is_ok());
        assert!(p.channels(&story(&["a."])).is_err());
        let other = Narrative::new("x", "", vec!["a."]).unwrap();
        assert!(matches!(p.channels(&other), Err(EncoderError::MissingNarrative(_))));
    }
}
