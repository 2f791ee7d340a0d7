use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles narrative ids with a seeded generator and cuts them at the
/// cumulative ratio boundaries (train, validation, test).
pub fn split_corpus(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<CorpusSplit, CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(CorpusError::Ratios(sum));
    }
    let n = corpus.len();
    if n < 3 {
        return Err(CorpusError::TooSmall(n));
    }
    let mut ids = corpus.ids();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let first = ((ratios[0] * n as f64).round() as usize).min(n);
    let second = (((ratios[0] + ratios[1]) * n as f64).round() as usize).clamp(first, n);
    let test = ids.split_off(second);
    let validation = ids.split_off(first);
    Ok(CorpusSplit {
        train: ids,
        validation,
        test,
    })
}
