use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    EncoderConfig, EncoderError, MentalStateEncoder, ReferenceEncoder, ReferenceMentalEncoder, ReferenceMode,
    ReferenceTokenModel, SentenceEncoder, TokenContextualEncoder,
};

pub const KNOWN_ADAPTERS: [&str; 5] = [
    "xsem.token",
    "xsem.sentence",
    "xsem.reference",
    "mental.reference",
    "mental.pretrained",
];

/// Context capacity of the default token-level adapter, in positions.
pub const TOKEN_CAPACITY: usize = 512;

pub type SemanticFactory = Arc<dyn Fn(&EncoderConfig) -> Result<Arc<dyn SentenceEncoder>, EncoderError> + Send + Sync>;
pub type MentalFactory = Arc<dyn Fn(&EncoderConfig) -> Result<Arc<dyn MentalStateEncoder>, EncoderError> + Send + Sync>;

/// Named encoder factories. Pretrained models are registered at runtime;
/// the defaults are reference implementations.
#[derive(Clone)]
pub struct AdapterRegistry {
    semantic: BTreeMap<String, SemanticFactory>,
    mental: BTreeMap<String, MentalFactory>,
}

impl Default for AdapterRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        Self {
            semantic: BTreeMap::new(),
            mental: BTreeMap::new(),
        }
    }

    /// Every key except `mental.pretrained`, which needs an external model.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register_semantic(
            "xsem.token",
            Arc::new(|c: &EncoderConfig| {
                let model = ReferenceTokenModel::new(c.width, c.seed, TOKEN_CAPACITY);
                Ok(Arc::new(TokenContextualEncoder::new(Arc::new(model))) as Arc<dyn SentenceEncoder>)
            }),
        );
        r.register_semantic(
            "xsem.sentence",
            Arc::new(|c: &EncoderConfig| {
                Ok(Arc::new(ReferenceEncoder::new(c.width, c.seed, ReferenceMode::SentenceLevel)) as Arc<dyn SentenceEncoder>)
            }),
        );
        r.register_semantic(
            "xsem.reference",
            Arc::new(|c: &EncoderConfig| {
                Ok(Arc::new(ReferenceEncoder::new(c.width, c.seed, ReferenceMode::TokenContextual)) as Arc<dyn SentenceEncoder>)
            }),
        );
        r.register_mental(
            "mental.reference",
            Arc::new(|c: &EncoderConfig| Ok(Arc::new(ReferenceMentalEncoder::new(c.width, c.seed)) as Arc<dyn MentalStateEncoder>)),
        );
        r
    }

    pub fn register_semantic(&mut self, key: impl Into<String>, factory: SemanticFactory) {
        self.semantic.insert(key.into(), factory);
    }

    pub fn register_mental(&mut self, key: impl Into<String>, factory: MentalFactory) {
        self.mental.insert(key.into(), factory);
    }

    pub fn semantic(&self, key: &str, config: &EncoderConfig) -> Result<Arc<dyn SentenceEncoder>, EncoderError> {
        match self.semantic.get(key) {
            Some(f) => f(config),
            None => Err(missing(key)),
        }
    }

    pub fn mental(&self, key: &str, config: &EncoderConfig) -> Result<Arc<dyn MentalStateEncoder>, EncoderError> {
        match self.mental.get(key) {
            Some(f) => f(config),
            None => Err(missing(key)),
        }
    }

    pub fn keys(&self) -> Vec<&str> {
        self.semantic.keys().chain(self.mental.keys()).map(String::as_str).collect()
    }
}

fn missing(key: &str) -> EncoderError {
    if KNOWN_ADAPTERS.contains(&key) {
        EncoderError::AdapterUnavailable(key.to_string())
    } else {
        EncoderError::UnknownAdapter(key.to_string())
    }
}
