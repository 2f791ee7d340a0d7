use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_gradients, MSenseModel, Mode};
use super::system::predict_channels;
use super::MSenseError;
use crate::corpus::{Corpus, Label, LabelSequence, Narrative};
use crate::encoders::{ChannelSource, ChannelTriple};
use crate::eval::per_class_f1;
use crate::neuralcore::{adam_step, AdamState, Gradients};

/// Supplies alternative wordings for training-time augmentation.
pub trait ParaphraseProvider: Send + Sync {
    fn paraphrase(&self, sentence: &str, seed: u64) -> Option<String>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over narratives of the summed sentence loss.
    pub train_loss: f64,
    /// Mean of the climax and resolution F1 on the validation set.
    pub val_macro_f1: f64,
    pub augmented_sentences: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
    pub class_weights: [f64; 3],
}

/// `1/frequency` per label, rescaled to mean 1. Labels absent from the data
/// get the largest observed weight.
pub fn inverse_frequency_weights<'a>(labels: impl IntoIterator<Item = &'a LabelSequence>) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for seq in labels {
        for l in &seq.labels {
            counts[l.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let mut w = [0.0; 3];
    for k in 0..3 {
        if counts[k] > 0 {
            w[k] = total as f64 / counts[k] as f64;
        }
    }
    let max = w.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return [1.0; 3];
    }
    for v in &mut w {
        if *v == 0.0 {
            *v = max;
        }
    }
    let mean = w.iter().sum::<f64>() / 3.0;
    w.map(|v| v / mean)
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Example<'a> {
    narrative: &'a Narrative,
    labels: Vec<usize>,
    channels: ChannelTriple,
}

fn examples<'a>(corpus: &'a Corpus, source: &dyn ChannelSource) -> Result<Vec<Example<'a>>, MSenseError> {
    corpus
        .labelled()?
        .into_iter()
        .map(|(n, l)| {
            Ok(Example {
                narrative: n,
                labels: l.labels.iter().map(|x| x.index()).collect(),
                channels: source.channels(n)?,
            })
        })
        .collect()
}

fn macro_f1(model: &MSenseModel, set: &[Example<'_>]) -> Result<f64, MSenseError> {
    let mut preds = Vec::with_capacity(set.len());
    let mut golds = Vec::with_capacity(set.len());
    for ex in set {
        preds.push(predict_channels(model, &ex.narrative.id, &ex.channels)?.label_sequence());
        golds.push(LabelSequence::new(
            ex.narrative.id.clone(),
            ex.labels.iter().map(|&i| Label::from_index(i).expect("valid index")).collect(),
        ));
    }
    let s = per_class_f1(&preds, &golds)?;
    Ok((s[Label::Climax.index()].f1 + s[Label::Resolution.index()].f1) / 2.0)
}

/// Paraphrases up to `⌊fraction·L⌋` unlabelled sentences; returns the edited
/// narrative and how many sentences changed.
fn augment(
    ex: &Example<'_>,
    provider: &dyn ParaphraseProvider,
    fraction: f64,
    seed: u64,
) -> Option<(Narrative, usize)> {
    let budget = (fraction * ex.narrative.len() as f64).floor() as usize;
    if budget == 0 {
        return None;
    }
    let mut candidates: Vec<usize> = (0..ex.labels.len()).filter(|&i| ex.labels[i] == Label::None.index()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    let mut edited = ex.narrative.clone();
    let mut changed = 0;
    for &i in candidates.iter().take(budget) {
        if let Some(text) = provider.paraphrase(&ex.narrative.sentences[i].text, mix(seed, i as u64)) {
            edited = edited.with_sentence(i, &text);
            changed += 1;
        }
    }
    (changed > 0).then_some((edited, changed))
}

/// Mini-batch Adam on the class-weighted loss, keeping the parameters of the
/// epoch with the best validation macro-F1. Validation falls back to the
/// training set when `val` has no labelled narratives. A patience of 0
/// disables early stopping.
pub fn train(
    mut model: MSenseModel,
    train: &Corpus,
    val: &Corpus,
    source: &dyn ChannelSource,
    paraphraser: Option<&dyn ParaphraseProvider>,
) -> Result<(MSenseModel, TrainingHistory), MSenseError> {
    model.config.validate()?;
    let train_set = examples(train, source)?;
    if train_set.is_empty() {
        return Err(MSenseError::EmptyTraining);
    }
    let val_set = examples(val, source)?;
    let weights = match model.config.class_weights {
        Some(w) => w,
        None => {
            let labels: Vec<LabelSequence> = train.labelled()?.into_iter().map(|(_, l)| l.clone()).collect();
            inverse_frequency_weights(&labels)
        }
    };
    model.config.class_weights = Some(weights);
    let cfg = model.config.clone();
    let augmenting = paraphraser.filter(|_| source.reads_text());

    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5eed));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainingHistory {
        class_weights: weights,
        best_val_macro_f1: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best_params = model.params.clone();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut augmented = 0;
        for batch in order.chunks(cfg.batch_narratives) {
            let mut grads = Gradients::new();
            for &idx in batch {
                let ex = &train_set[idx];
                let step_seed = mix(mix(cfg.seed, epoch as u64), idx as u64);
                let edited = augmenting.and_then(|p| augment(ex, p, cfg.augment_fraction, step_seed));
                let channels = match &edited {
                    Some((n, changed)) => {
                        augmented += changed;
                        source.channels(n)?
                    }
                    None => ex.channels.clone(),
                };
                let (loss, g) =
                    loss_and_gradients(&model, &channels, &ex.labels, &weights, Mode::Training { seed: step_seed })?;
                epoch_loss += loss;
                grads.merge(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            model.params.set_grads(&grads)?;
            adam_step(&mut model.params, &mut adam, cfg.lr);
        }

        let f1 = if val_set.is_empty() {
            macro_f1(&model, &train_set)?
        } else {
            macro_f1(&model, &val_set)?
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_macro_f1: f1,
            augmented_sentences: augmented,
        });
        log::debug!("epoch {epoch}: loss {:.4}, validation macro-F1 {f1:.4}", epoch_loss / train_set.len() as f64);
        if f1 > history.best_val_macro_f1 {
            history.best_val_macro_f1 = f1;
            history.best_epoch = epoch;
            best_params = model.params.clone();
        } else if cfg.patience > 0 && epoch - history.best_epoch >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    model.params = best_params;
    model.params.zero_grads();
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderSet;
    use crate::msense::MSenseConfig;

    #[test]
    fn inverse_frequency_weights_average_one() {
        let seqs = vec![LabelSequence::new(
            "a",
            vec![Label::None, Label::None, Label::None, Label::Climax, Label::Resolution, Label::None],
        )];
        let w = inverse_frequency_weights(&seqs);
        assert!((w.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!((w[1] / w[0] - 4.0).abs() < 1e-12);
        assert_eq!(w[1], w[2]);
        let only_none = vec![LabelSequence::all_none("b", 3)];
        assert_eq!(inverse_frequency_weights(&only_none), [1.0; 3]);
    }

    struct Upper;

    impl ParaphraseProvider for Upper {
        fn paraphrase(&self, sentence: &str, _: u64) -> Option<String> {
            Some(format!("{sentence} indeed"))
        }
    }

    fn tiny_corpus() -> Corpus {
        let mut c = Corpus::new();
        for i in 0..4 {
            let n = Narrative::new(
                format!("n{i}"),
                "",
                ["I woke.", "I ate.", "The roof fell in.", "I called for help.", "We rebuilt it."],
            )
            .unwrap();
            let l = vec![Label::None, Label::None, Label::Climax, Label::None, Label::Resolution];
            c.push(n, Some(LabelSequence::new(format!("n{i}"), l))).unwrap();
        }
        c
    }

    fn config() -> MSenseConfig {
        MSenseConfig {
            d: 8,
            n_heads: 2,
            n_layers: 1,
            max_epochs: 3,
            batch_narratives: 2,
            lr: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_runs_and_augmentation_respects_budget() {
        let c = tiny_corpus();
        let enc = EncoderSet::reference(8, 1);
        let run = || train(MSenseModel::new(config()).unwrap(), &c, &c, &enc, Some(&Upper)).unwrap();
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        // ⌊0.2·5⌋ = 1 sentence per narrative per epoch
        assert!(ha.epochs.iter().all(|e| e.augmented_sentences == 4));
    }

    #[test]
    fn missing_provider_skips_augmentation() {
        let c = tiny_corpus();
        let enc = EncoderSet::reference(8, 1);
        let (_, h) = train(MSenseModel::new(config()).unwrap(), &c, &Corpus::new(), &enc, None).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert!(h.epochs.iter().all(|e| e.augmented_sentences == 0));
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let enc = EncoderSet::reference(8, 1);
        let r = train(MSenseModel::new(config()).unwrap(), &Corpus::new(), &Corpus::new(), &enc, None);
        assert!(matches!(r, Err(MSenseError::EmptyTraining)));
    }
}
