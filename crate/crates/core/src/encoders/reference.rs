//! Deterministic stand-ins for pretrained encoders.
//!
//! Each token maps to a pseudo-random unit-variance vector seeded by a hash
//! of (seed, salt, token bytes). A sentence's base vector is the mean of its
//! token vectors, or zero when it has none.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::token::{TokenInput, TokenModel, CLS, SEP};
use super::{EncoderError, MentalStateEncoder, MentalStateRequest, SentenceEncoder};
use crate::corpus::{tokenize, Narrative};
use crate::neuralcore::Tensor;

/// Weight of the sentence's own base vector; the rest goes to context.
pub const SELF_WEIGHT: f64 = 0.9;
pub const CONTEXT_WEIGHT: f64 = 0.1;

/// Memoised token-vector lookup for one (seed, width).
#[derive(Debug)]
pub(crate) struct TokenTable {
    seed: u64,
    width: usize,
    memo: Mutex<HashMap<(String, String), Arc<[f64]>>>,
}

impl TokenTable {
    pub(crate) fn new(width: usize, seed: u64) -> Self {
        Self {
            seed,
            width,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub(crate) fn vector(&self, salt: &str, token: &str) -> Arc<[f64]> {
        let key = (salt.to_string(), token.to_string());
        if let Some(v) = self.memo.lock().expect("token table lock").get(&key) {
            return v.clone();
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(salt.as_bytes());
        h.update([0u8]);
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let v: Arc<[f64]> = (0..self.width).map(|_| StandardNormal.sample(&mut rng)).collect();
        self.memo.lock().expect("token table lock").insert(key, v.clone());
        v
    }

    /// Sum of token vectors and the token count.
    fn accumulate<'a>(&self, salt: &str, tokens: impl IntoIterator<Item = &'a str>, sum: &mut [f64]) -> usize {
        let mut n = 0;
        for t in tokens {
            for (s, v) in sum.iter_mut().zip(self.vector(salt, t).iter()) {
                *s += v;
            }
            n += 1;
        }
        n
    }

    pub(crate) fn mean<'a>(&self, salt: &str, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
        let mut sum = vec![0.0; self.width];
        let n = self.accumulate(salt, tokens, &mut sum);
        if n > 0 {
            sum.iter_mut().for_each(|v| *v /= n as f64);
        }
        sum
    }
}

fn mix(own: &[f64], context: &[f64]) -> Vec<f64> {
    own.iter()
        .zip(context)
        .map(|(a, c)| SELF_WEIGHT * a + CONTEXT_WEIGHT * c)
        .collect()
}

fn token_strs(tokens: &[String]) -> impl Iterator<Item = &str> {
    tokens.iter().map(String::as_str)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceMode {
    /// Rows mix in the mean of all the narrative's tokens.
    TokenContextual,
    /// Rows are the sentence base vectors alone.
    SentenceLevel,
}

#[derive(Debug)]
pub struct ReferenceEncoder {
    table: TokenTable,
    mode: ReferenceMode,
    name: &'static str,
}

impl ReferenceEncoder {
    pub fn new(width: usize, seed: u64, mode: ReferenceMode) -> Self {
        let name = match mode {
            ReferenceMode::TokenContextual => "xsem.reference",
            ReferenceMode::SentenceLevel => "xsem.sentence",
        };
        Self {
            table: TokenTable::new(width, seed),
            mode,
            name,
        }
    }

    pub fn mode(&self) -> ReferenceMode {
        self.mode
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        self.table.vector("", token).to_vec()
    }

    pub fn base_vector(&self, tokens: &[String]) -> Vec<f64> {
        self.table.mean("", token_strs(tokens))
    }
}

impl SentenceEncoder for ReferenceEncoder {
    fn name(&self) -> &str {
        self.name
    }

    fn width(&self) -> usize {
        self.table.width
    }

    fn encode(&self, narrative: &Narrative) -> Result<Tensor, EncoderError> {
        let d = self.table.width;
        let bases: Vec<Vec<f64>> = narrative.sentences.iter().map(|s| self.base_vector(&s.tokens)).collect();
        let mut data = Vec::with_capacity(bases.len() * d);
        match self.mode {
            ReferenceMode::SentenceLevel => bases.iter().for_each(|b| data.extend_from_slice(b)),
            ReferenceMode::TokenContextual => {
                let all = self
                    .table
                    .mean("", narrative.sentences.iter().flat_map(|s| token_strs(&s.tokens)));
                bases.iter().for_each(|b| data.extend(mix(b, &all)));
            }
        }
        Tensor::matrix(bases.len(), d, data).map_err(|e| EncoderError::Shape(e.to_string()))
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        Ok(self.base_vector(&tokenize(text)))
    }
}

/// Mental-state stand-in: the sentence base under an (entity, attribute)
/// salt, mixed with the salted mean of all earlier tokens.
#[derive(Debug)]
pub struct ReferenceMentalEncoder {
    table: TokenTable,
}

impl ReferenceMentalEncoder {
    pub fn new(width: usize, seed: u64) -> Self {
        Self {
            table: TokenTable::new(width, seed),
        }
    }

    pub fn salt(entity: &str, attribute: super::MentalAttribute) -> String {
        format!("{entity}\u{1f}{}", attribute.as_str())
    }
}

impl MentalStateEncoder for ReferenceMentalEncoder {
    fn name(&self) -> &str {
        "mental.reference"
    }

    fn width(&self) -> usize {
        self.table.width
    }

    fn encode_state(&self, request: &MentalStateRequest<'_>) -> Result<Vec<f64>, EncoderError> {
        if request.entity.trim().is_empty() {
            return Err(EncoderError::EmptyEntity);
        }
        let salt = Self::salt(request.entity, request.attribute);
        let own = self.table.mean(&salt, token_strs(&tokenize(request.sentence)));
        let prior: Vec<String> = request.context.iter().flat_map(|s| tokenize(s)).collect();
        let context = self.table.mean(&salt, token_strs(&prior));
        Ok(mix(&own, &context))
    }

    fn encode_story(
        &self,
        narrative: &Narrative,
        entity: &str,
        attribute: super::MentalAttribute,
    ) -> Result<Tensor, EncoderError> {
        if entity.trim().is_empty() {
            return Err(EncoderError::EmptyEntity);
        }
        // running sums make this linear in story length
        let d = self.table.width;
        let salt = Self::salt(entity, attribute);
        let mut prior_sum = vec![0.0; d];
        let mut prior_n = 0usize;
        let mut data = Vec::with_capacity(narrative.len() * d);
        for s in &narrative.sentences {
            let own = self.table.mean(&salt, token_strs(&s.tokens));
            let context: Vec<f64> = if prior_n == 0 {
                vec![0.0; d]
            } else {
                prior_sum.iter().map(|v| v / prior_n as f64).collect()
            };
            data.extend(mix(&own, &context));
            prior_n += self.table.accumulate(&salt, token_strs(&s.tokens), &mut prior_sum);
        }
        Tensor::matrix(narrative.len(), d, data).map_err(|e| EncoderError::Shape(e.to_string()))
    }
}

/// Token model whose classification-marker states follow the reference
/// contract, so the token-input pipeline can run without pretrained weights.
#[derive(Debug)]
pub struct ReferenceTokenModel {
    table: TokenTable,
    capacity: usize,
}

impl ReferenceTokenModel {
    pub fn new(width: usize, seed: u64, capacity: usize) -> Self {
        Self {
            table: TokenTable::new(width, seed),
            capacity,
        }
    }
}

impl TokenModel for ReferenceTokenModel {
    fn width(&self) -> usize {
        self.table.width
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn layers(&self) -> usize {
        1
    }

    fn forward(&self, input: &TokenInput) -> Result<Vec<Tensor>, EncoderError> {
        let d = self.table.width;
        let is_word = |t: &str| t != CLS && t != SEP;
        let all = self
            .table
            .mean("", input.tokens.iter().map(String::as_str).filter(|t| is_word(t)));
        let mut data = Vec::with_capacity(input.tokens.len() * d);
        for (p, tok) in input.tokens.iter().enumerate() {
            if tok == CLS {
                let words = input.tokens[p + 1..]
                    .iter()
                    .map(String::as_str)
                    .take_while(|t| is_word(t));
                data.extend(mix(&self.table.mean("", words), &all));
            } else if tok == SEP {
                data.extend(std::iter::repeat_n(0.0, d));
            } else {
                data.extend_from_slice(&self.table.vector("", tok));
            }
        }
        let states = Tensor::matrix(input.tokens.len(), d, data).map_err(|e| EncoderError::Shape(e.to_string()))?;
        Ok(vec![states])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::MentalAttribute;

    fn story(sentences: &[&str]) -> Narrative {
        Narrative::new("s", "t", sentences.to_vec()).unwrap()
    }

    fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
        let d = rows[0].len();
        let mut m = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                m[k] += r[k] / rows.len() as f64;
            }
        }
        m
    }

    #[test]
    fn token_vectors_are_seeded_and_roughly_unit_variance() {
        let a = ReferenceEncoder::new(4096, 11, ReferenceMode::SentenceLevel);
        let b = ReferenceEncoder::new(4096, 11, ReferenceMode::SentenceLevel);
        let c = ReferenceEncoder::new(4096, 12, ReferenceMode::SentenceLevel);
        let v = a.token_vector("storm");
        assert_eq!(v, b.token_vector("storm"));
        assert_ne!(v, c.token_vector("storm"));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn rows_follow_the_reference_formulas() {
        let n = story(&["The dog barked.", "I froze!", "..."]);
        let d = 12;
        let sent = ReferenceEncoder::new(d, 5, ReferenceMode::SentenceLevel);
        let ctx = ReferenceEncoder::new(d, 5, ReferenceMode::TokenContextual);
        let tok_rows: Vec<Vec<f64>> = n
            .sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| sent.token_vector(t)))
            .collect();
        let all = mean_rows(&tok_rows);
        let s_out = sent.encode(&n).unwrap();
        let c_out = ctx.encode(&n).unwrap();
        for (i, s) in n.sentences.iter().enumerate() {
            let toks: Vec<Vec<f64>> = s.tokens.iter().map(|t| sent.token_vector(t)).collect();
            let base = mean_rows(&toks);
            for k in 0..d {
                assert!((s_out.row(i)[k] - base[k]).abs() < 1e-12);
                assert!((c_out.row(i)[k] - (0.9 * base[k] + 0.1 * all[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sentence_without_tokens_has_zero_base() {
        let enc = ReferenceEncoder::new(6, 0, ReferenceMode::SentenceLevel);
        let n = story(&["   "]);
        assert_eq!(enc.encode(&n).unwrap().data(), &[0.0; 6]);
    }

    #[test]
    fn one_token_edit_moves_other_rows_only_by_the_context_term() {
        let enc = ReferenceEncoder::new(10, 2, ReferenceMode::TokenContextual);
        let a = story(&["I ran home.", "The door was open.", "I went in."]);
        let b = a.with_sentence(1, "The door was shut.");
        let ea = enc.encode(&a).unwrap();
        let eb = enc.encode(&b).unwrap();
        // the context mean moves by (v_shut - v_open) / token_count
        let count = a.sentences.iter().map(|s| s.tokens.len()).sum::<usize>() as f64;
        let shift: Vec<f64> = enc
            .token_vector("shut")
            .iter()
            .zip(enc.token_vector("open"))
            .map(|(s, o)| 0.1 * (s - o) / count)
            .collect();
        for i in [0, 2] {
            for k in 0..10 {
                assert!((eb.row(i)[k] - ea.row(i)[k] - shift[k]).abs() < 1e-12);
            }
        }
        assert!(ea.row(1).iter().zip(eb.row(1)).any(|(x, y)| (x - y).abs() > 1e-3));
    }

    #[test]
    fn mental_state_salt_and_context() {
        let enc = ReferenceMentalEncoder::new(8, 1);
        let req = |attribute| MentalStateRequest {
            sentence: "I lost my keys.",
            context: vec!["I came home late."],
            entity: "I",
            attribute,
        };
        let intent = enc.encode_state(&req(MentalAttribute::XIntent)).unwrap();
        assert_eq!(intent, enc.encode_state(&req(MentalAttribute::XIntent)).unwrap());
        assert_ne!(intent, enc.encode_state(&req(MentalAttribute::XReact)).unwrap());

        let first = enc
            .encode_state(&MentalStateRequest {
                sentence: "I lost my keys.",
                context: vec![],
                entity: "I",
                attribute: MentalAttribute::XIntent,
            })
            .unwrap();
        let salt = ReferenceMentalEncoder::salt("I", MentalAttribute::XIntent);
        let own = enc.table.mean(&salt, ["i", "lost", "my", "keys", "."]);
        for k in 0..8 {
            assert!((first[k] - 0.9 * own[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_story_matches_per_sentence_calls() {
        let enc = ReferenceMentalEncoder::new(8, 4);
        let n = story(&["I woke.", "Rain fell.", "I ran.", "", "I slipped on ice.", "Everyone laughed."]);
        for attribute in [MentalAttribute::XIntent, MentalAttribute::XReact] {
            let batch = enc.encode_story(&n, "I", attribute).unwrap();
            assert_eq!(batch.shape(), &[6, 8]);
            let texts: Vec<&str> = n.texts().collect();
            for i in 0..6 {
                let single = enc
                    .encode_state(&MentalStateRequest {
                        sentence: texts[i],
                        context: texts[..i].to_vec(),
                        entity: "I",
                        attribute,
                    })
                    .unwrap();
                for k in 0..8 {
                    assert!((batch.row(i)[k] - single[k]).abs() < 1e-12);
                }
            }
        }
    }
}
