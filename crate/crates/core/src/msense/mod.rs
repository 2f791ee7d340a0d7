//! Sentence labelling model: per-sentence transformer fusion of the three
//! channels, a transformer story encoder across sentences, windowed
//! interaction features and a softmax head.
//!
//! Every stage has an ablation switch in [`MSenseConfig`].

mod interaction;
mod model;
mod system;
mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;
use crate::encoders::EncoderError;
use crate::eval::EvalError;
use crate::neuralcore::NnError;

pub use interaction::{cosine, interaction_features, INTERACTION_FEATURES};
pub use model::{
    classify, encode_story, forward, fuse, loss_and_gradients, FusionAttentionMap, MSenseModel, Mode, SLOT_NAMES,
    SNAPSHOT_VERSION,
};
pub use system::{extract_fusion_attention, predict, predict_channels, MSenseSystem, Prediction};
pub use train::{inverse_frequency_weights, train, EpochRecord, ParaphraseProvider, TrainingHistory};

#[derive(Debug, thiserror::Error)]
pub enum MSenseError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training set has no labelled narratives")]
    EmptyTraining,
    #[error("fusion attention requested but the fusion layer is disabled")]
    FusionDisabled,
    #[error("{0}")]
    Shape(String),
    #[error("model snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MSenseConfig {
    pub d: usize,
    pub n_heads: usize,
    /// Story encoder depth.
    pub n_layers: usize,
    /// Interaction window `s`.
    pub window: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_narratives: usize,
    pub use_fusion: bool,
    pub use_intent: bool,
    pub use_emotion: bool,
    pub use_interaction: bool,
    pub use_story_encoder: bool,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Upper bound on the share of a story's sentences that get paraphrased.
    pub augment_fraction: f64,
    /// Per-label loss weights (none, climax, resolution); derived from the
    /// training data when absent.
    pub class_weights: Option<[f64; 3]>,
}

impl Default for MSenseConfig {
    fn default() -> Self {
        Self {
            d: 96,
            n_heads: 12,
            n_layers: 2,
            window: 2,
            dropout: 0.2,
            lr: 1e-4,
            batch_narratives: 32,
            use_fusion: true,
            use_intent: true,
            use_emotion: true,
            use_interaction: true,
            use_story_encoder: true,
            max_epochs: 300,
            patience: 30,
            seed: 0,
            augment_fraction: 0.2,
            class_weights: None,
        }
    }
}

impl MSenseConfig {
    /// Number of mental-state plus semantic channels fed to the fusion layer.
    pub fn channel_count(&self) -> usize {
        1 + usize::from(self.use_intent) + usize::from(self.use_emotion)
    }

    pub fn validate(&self) -> Result<(), MSenseError> {
        let fail = |m: String| Err(MSenseError::Config(m));
        if self.d == 0 {
            return fail("d must be positive".into());
        }
        if self.n_heads == 0 || !self.d.is_multiple_of(self.n_heads) {
            return fail(format!("d={} is not divisible by {} heads", self.d, self.n_heads));
        }
        if self.use_story_encoder && !self.d.is_multiple_of(2) {
            return fail(format!("positional encoding needs an even d, got {}", self.d));
        }
        if self.window == 0 {
            return fail("window must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.augment_fraction > 0.0 && self.augment_fraction <= 1.0) {
            return fail(format!("augment_fraction {} outside (0, 1]", self.augment_fraction));
        }
        if self.batch_narratives == 0 {
            return fail("batch_narratives must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} is invalid", self.lr));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return fail(format!("class weights {w:?} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Every ablation switch off: a softmax over raw semantic rows.
    pub fn all_ablations(self) -> Self {
        Self {
            use_fusion: false,
            use_intent: false,
            use_emotion: false,
            use_interaction: false,
            use_story_encoder: false,
            ..self
        }
    }
}
