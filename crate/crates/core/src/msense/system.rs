use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{forward, fusion_attention, FusionAttentionMap, MSenseModel};
use super::MSenseError;
use crate::corpus::{Label, LabelSequence, Narrative};
use crate::encoders::{ChannelSource, ChannelTriple, EncoderError, EncoderSet, SentenceEncoder};
use crate::eval::System;

/// One line of prediction output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub labels: Vec<Label>,
    pub probabilities: Vec<[f64; 3]>,
}

impl Prediction {
    pub fn label_sequence(&self) -> LabelSequence {
        LabelSequence::new(self.id.clone(), self.labels.clone())
    }
}

/// Argmax per row; ties go to the earlier label (none, climax, resolution).
fn decode(probs: &crate::neuralcore::Tensor) -> Vec<Label> {
    (0..probs.rows())
        .map(|i| {
            let row = probs.row(i);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            Label::from_index(best).expect("three classes")
        })
        .collect()
}

pub fn predict_channels(model: &MSenseModel, id: &str, channels: &ChannelTriple) -> Result<Prediction, MSenseError> {
    let probs = forward(channels, model)?;
    Ok(Prediction {
        id: id.to_string(),
        labels: decode(&probs),
        probabilities: (0..probs.rows())
            .map(|i| {
                let r = probs.row(i);
                [r[0], r[1], r[2]]
            })
            .collect(),
    })
}

pub fn predict(model: &MSenseModel, narrative: &Narrative, source: &dyn ChannelSource) -> Result<LabelSequence, MSenseError> {
    let channels = source.channels(narrative)?;
    Ok(predict_channels(model, &narrative.id, &channels)?.label_sequence())
}

pub fn extract_fusion_attention(
    model: &MSenseModel,
    narrative: &Narrative,
    source: &dyn ChannelSource,
) -> Result<FusionAttentionMap, MSenseError> {
    if !model.config.use_fusion {
        return Err(MSenseError::FusionDisabled);
    }
    let channels = source.channels(narrative)?;
    Ok(FusionAttentionMap {
        narrative_id: narrative.id.clone(),
        weights: fusion_attention(model, &channels)?,
    })
}

/// A trained model bound to its encoders, usable wherever a [`System`] is.
/// When `fallback` is set, narratives too long for the semantic encoder's
/// context are re-encoded with it instead.
pub struct MSenseSystem {
    pub model: MSenseModel,
    pub encoders: EncoderSet,
    pub fallback: Option<Arc<dyn SentenceEncoder>>,
}

impl MSenseSystem {
    pub fn new(model: MSenseModel, encoders: EncoderSet) -> Self {
        Self {
            model,
            encoders,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, encoder: Arc<dyn SentenceEncoder>) -> Self {
        self.fallback = Some(encoder);
        self
    }

    pub fn channels(&self, narrative: &Narrative, entity: &str) -> Result<ChannelTriple, MSenseError> {
        match self.encoders.encode_channels(narrative, Some(entity)) {
            Err(EncoderError::ContextCapacity { tokens, limit }) if self.fallback.is_some() => {
                log::info!(
                    "`{}` has {tokens} tokens (limit {limit}); using the sentence-level encoder",
                    narrative.id
                );
                let set = EncoderSet::new(self.fallback.clone().expect("checked"), self.encoders.mental.clone())?;
                Ok(set.encode_channels(narrative, Some(entity))?)
            }
            other => Ok(other?),
        }
    }
}

impl System for MSenseSystem {
    fn name(&self) -> String {
        "m-sense".into()
    }

    fn predict(
        &self,
        narrative: &Narrative,
        entity: &str,
        _seed: u64,
    ) -> Result<LabelSequence, Box<dyn std::error::Error + Send + Sync>> {
        let channels = self.channels(narrative, entity)?;
        Ok(predict_channels(&self.model, &narrative.id, &channels)?.label_sequence())
    }
}
