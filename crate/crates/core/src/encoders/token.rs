use std::sync::Arc;

use super::{EncoderError, SentenceEncoder};
use crate::corpus::{tokenize, Narrative};
use crate::neuralcore::Tensor;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Flattened narrative for a token-level encoder: each sentence becomes
/// `[CLS] tokens… [SEP]`, with segment ids alternating 0/1 per sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenInput {
    pub tokens: Vec<String>,
    pub segments: Vec<u8>,
    pub cls_positions: Vec<usize>,
}

impl TokenInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn build_token_input<'a>(sentences: impl IntoIterator<Item = &'a [String]>, capacity: usize) -> Result<TokenInput, EncoderError> {
    let mut input = TokenInput {
        tokens: Vec::new(),
        segments: Vec::new(),
        cls_positions: Vec::new(),
    };
    for (i, toks) in sentences.into_iter().enumerate() {
        let seg = (i % 2) as u8;
        input.cls_positions.push(input.tokens.len());
        input.tokens.push(CLS.to_string());
        input.tokens.extend(toks.iter().cloned());
        input.tokens.push(SEP.to_string());
        input.segments.extend(std::iter::repeat_n(seg, toks.len() + 2));
    }
    if input.tokens.len() > capacity {
        return Err(EncoderError::ContextCapacity {
            tokens: input.tokens.len(),
            limit: capacity,
        });
    }
    Ok(input)
}

/// A contextual encoder over a flat token sequence. Returns the hidden
/// states of every layer (last layer last), each `positions × width`.
pub trait TokenModel: Send + Sync {
    fn width(&self) -> usize;
    fn capacity(&self) -> usize;
    fn layers(&self) -> usize;
    fn forward(&self, input: &TokenInput) -> Result<Vec<Tensor>, EncoderError>;
}

/// Sentence rows are the final-layer states at each `[CLS]` position.
pub struct TokenContextualEncoder {
    model: Arc<dyn TokenModel>,
}

impl TokenContextualEncoder {
    pub fn new(model: Arc<dyn TokenModel>) -> Self {
        Self { model }
    }

    pub fn capacity(&self) -> usize {
        self.model.capacity()
    }

    fn cls_rows(&self, input: &TokenInput, layer: &Tensor) -> Tensor {
        let d = self.model.width();
        let mut data = Vec::with_capacity(input.cls_positions.len() * d);
        for &p in &input.cls_positions {
            data.extend_from_slice(layer.row(p));
        }
        Tensor::matrix(input.cls_positions.len(), d, data).expect("rows have model width")
    }
}

impl SentenceEncoder for TokenContextualEncoder {
    fn name(&self) -> &str {
        "xsem.token"
    }

    fn width(&self) -> usize {
        self.model.width()
    }

    fn encode(&self, narrative: &Narrative) -> Result<Tensor, EncoderError> {
        let input = build_token_input(narrative.sentences.iter().map(|s| s.tokens.as_slice()), self.capacity())?;
        let layers = self.model.forward(&input)?;
        let last = layers.last().ok_or_else(|| EncoderError::Shape("token model returned no layers".into()))?;
        Ok(self.cls_rows(&input, last))
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        let toks = tokenize(text);
        let input = build_token_input([toks.as_slice()], self.capacity())?;
        let layers = self.model.forward(&input)?;
        let last = layers.last().ok_or_else(|| EncoderError::Shape("token model returned no layers".into()))?;
        Ok(last.row(0).to_vec())
    }

    /// Concatenated `[CLS]` states of the last four layers when the model
    /// has that many, otherwise the single text vector.
    fn classifier_features(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        if self.model.layers() < 4 {
            return self.encode_text(text);
        }
        let toks = tokenize(text);
        let input = build_token_input([toks.as_slice()], self.capacity())?;
        let layers = self.model.forward(&input)?;
        Ok(layers[layers.len() - 4..].iter().flat_map(|l| l.row(0).to_vec()).collect())
    }

    fn feature_width(&self) -> usize {
        if self.model.layers() < 4 {
            self.model.width()
        } else {
            4 * self.model.width()
        }
    }
}
