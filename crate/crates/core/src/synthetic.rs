//! Seeded toy corpora with planted structure, for tests, demos and
//! acceptance runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Corpus, Label, LabelSequence, Narrative};
use crate::encoders::{ChannelSource, ChannelTriple, EncoderError, EncoderSet, PrecomputedChannels};
use crate::neuralcore::Tensor;

const SUBJECTS: [&str; 6] = ["I", "My sister", "The neighbour", "Our dog", "My boss", "A stranger"];
const VERBS: [&str; 10] = [
    "opened", "dropped", "painted", "carried", "found", "fixed", "lost", "cleaned", "sold", "watched",
];
const OBJECTS: [&str; 10] = [
    "the door", "a box", "the car", "my phone", "the garden", "a letter", "the fridge", "the kettle", "a ticket",
    "the window",
];
const TAILS: [&str; 6] = ["", " again", " before lunch", " after work", " in the rain", " without a word"];

/// Where the class signal is planted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTask {
    /// Climax rows carry a signal in xIntent, resolution rows in xReact.
    Separable,
    /// Both signals live in xIntent; xReact is pure noise.
    IntentOnly,
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub narratives: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub width: usize,
    pub seed: u64,
    /// Standard deviation of the per-coordinate planted signal.
    pub signal: f64,
    pub task: SyntheticTask,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            narratives: 200,
            min_len: 5,
            max_len: 15,
            width: 96,
            seed: 0,
            signal: 1.0,
            task: SyntheticTask::Separable,
        }
    }
}

pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub channels: PrecomputedChannels,
}

fn sentence(rng: &mut impl Rng) -> String {
    format!(
        "{} {} {}{}.",
        SUBJECTS.choose(rng).unwrap(),
        VERBS.choose(rng).unwrap(),
        OBJECTS.choose(rng).unwrap(),
        TAILS.choose(rng).unwrap()
    )
}

/// Random story text with exactly one climax and one later resolution.
pub fn synthetic_text_corpus(config: &SyntheticConfig) -> Corpus {
    assert!(config.min_len >= 2 && config.min_len <= config.max_len, "need 2 ≤ min_len ≤ max_len");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut corpus = Corpus::new();
    for i in 0..config.narratives {
        let len = rng.random_range(config.min_len..=config.max_len);
        let climax = rng.random_range(0..len - 1);
        let resolution = rng.random_range(climax + 1..len);
        let id = format!("syn-{i:04}");
        let title = sentence(&mut rng);
        let texts: Vec<String> = (0..len).map(|_| sentence(&mut rng)).collect();
        let narrative = Narrative::new(id.clone(), title, texts).expect("nonempty narrative");
        let mut labels = LabelSequence::all_none(id, len);
        labels.labels[climax] = Label::Climax;
        labels.labels[resolution] = Label::Resolution;
        corpus.push(narrative, Some(labels)).expect("unique ids");
    }
    corpus
}

fn gaussian(width: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..width).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// Encodes [`synthetic_text_corpus`] with the reference encoders and adds a
/// fixed per-class vector to the rows chosen by `config.task`.
pub fn synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticCorpus, EncoderError> {
    let corpus = synthetic_text_corpus(config);
    let encoders = EncoderSet::reference(config.width, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5157_4e41_4c00_0000);
    let climax_signal = gaussian(config.width, config.signal, &mut rng);
    let resolution_signal = gaussian(config.width, config.signal, &mut rng);
    let mut channels = PrecomputedChannels::new(config.width);
    for entry in corpus.entries() {
        let base = encoders.channels(&entry.narrative)?;
        let mut intent = base.intent.rows;
        let mut react = base.react.rows;
        let labels = entry.labels.as_ref().expect("synthetic corpora are labelled");
        for (i, label) in labels.labels.iter().enumerate() {
            let (target, signal) = match (label, config.task) {
                (Label::None, _) => continue,
                (Label::Climax, _) => (&mut intent, &climax_signal),
                (Label::Resolution, SyntheticTask::Separable) => (&mut react, &resolution_signal),
                (Label::Resolution, SyntheticTask::IntentOnly) => (&mut intent, &resolution_signal),
            };
            target.row_mut(i).iter_mut().zip(signal).for_each(|(v, s)| *v += s);
        }
        channels.insert(entry.narrative.id.clone(), ChannelTriple::new(base.sem.rows, intent, react)?)?;
    }
    Ok(SyntheticCorpus { corpus, channels })
}

/// `len × width` embeddings that stay at one random point and then jump to
/// another at row `jump`.
pub fn step_embeddings(len: usize, jump: usize, width: usize, seed: u64) -> Tensor {
    assert!(jump < len, "jump index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let before = gaussian(width, 1.0, &mut rng);
    let after = gaussian(width, 1.0, &mut rng);
    let rows: Vec<Vec<f64>> = (0..len).map(|i| if i < jump { before.clone() } else { after.clone() }).collect();
    Tensor::from_rows(&rows).expect("rectangular rows")
}
