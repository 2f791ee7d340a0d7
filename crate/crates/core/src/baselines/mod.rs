//! Zero-shot and count-based reference systems.

mod positional;
mod surprise;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusError, Label, LabelSequence, Narrative};
use crate::encoders::{EncoderError, SentenceEncoder};
use crate::msense::cosine;
use crate::eval::System;

pub use positional::{apply_positional, fit_positional, DistributionBaseline, PositionalModel, POSITION_BINS};
pub use surprise::{surprise_baseline, surprise_series, SurpriseBaseline};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("no {0} sentences in the training data")]
    AbsentClass(Label),
    #[error("narrative `{0}` has an empty title")]
    EmptyTitle(String),
    #[error("unknown baseline `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Uniform draw over the three labels for every sentence. The stream depends
/// on both the seed and the narrative id.
pub fn random_baseline(narrative: &Narrative, seed: u64) -> LabelSequence {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(narrative.id.as_bytes())
        .finalize();
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    let labels = (0..narrative.len())
        .map(|_| Label::from_index(rng.random_range(0..3)).expect("index below 3"))
        .collect();
    LabelSequence::new(narrative.id.clone(), labels)
}

/// Climax at the sentence nearest the title, resolution at the last sentence.
pub fn heuristic_baseline(narrative: &Narrative, encoder: &dyn SentenceEncoder) -> Result<LabelSequence, BaselineError> {
    if narrative.title.trim().is_empty() {
        return Err(BaselineError::EmptyTitle(narrative.id.clone()));
    }
    let title = encoder.encode_text(&narrative.title)?;
    let rows = encoder.encode(narrative)?;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..rows.rows() {
        let s = cosine(&title, rows.row(i));
        if s > best.1 {
            best = (i, s);
        }
    }
    let mut labels = LabelSequence::all_none(narrative.id.clone(), narrative.len());
    let last = narrative.len() - 1;
    if best.0 != last {
        labels.labels[last] = Label::Resolution;
    }
    labels.labels[best.0] = Label::Climax;
    Ok(labels)
}

type Boxed = Box<dyn std::error::Error + Send + Sync>;

pub struct RandomBaseline;

impl System for RandomBaseline {
    fn name(&self) -> String {
        "random".into()
    }

    fn predict(&self, narrative: &Narrative, _: &str, seed: u64) -> Result<LabelSequence, Boxed> {
        Ok(random_baseline(narrative, seed))
    }

    fn stochastic(&self) -> bool {
        true
    }
}

pub struct HeuristicBaseline {
    pub encoder: Arc<dyn SentenceEncoder>,
}

impl System for HeuristicBaseline {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn predict(&self, narrative: &Narrative, _: &str, _: u64) -> Result<LabelSequence, Boxed> {
        Ok(heuristic_baseline(narrative, self.encoder.as_ref())?)
    }
}
