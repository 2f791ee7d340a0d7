use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::encoders::SentenceEncoder;
use crate::fsutil::write_atomic;
use crate::neuralcore::{adam_step, glorot, linear, linear_backward, relu, relu_backward, AdamState, Gradients, ParameterSet, Tensor};

/// Two linear layers with a relu between them and a sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct StoryClassifier {
    pub params: ParameterSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Share of the labelled texts held out for model selection.
    pub validation_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            batch: 16,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 0 means the initial weights were never beaten.
    pub best_epoch: usize,
}

impl StoryClassifier {
    /// Random initialisation with hidden width `d_in / 2`.
    pub fn new(d_in: usize, seed: u64) -> Self {
        let d_h = (d_in / 2).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        params.insert("w1", glorot(d_in, d_h, &mut rng));
        params.insert("b1", Tensor::zeros(&[d_h]));
        params.insert("w2", glorot(d_h, 1, &mut rng));
        params.insert("b2", Tensor::zeros(&[1]));
        Self { params }
    }

    pub fn input_width(&self) -> usize {
        self.params.get("w1").map_or(0, |w| w.rows())
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let bytes = serde_json::to_vec(&self.params.to_json()).map_err(|e| IngestError::Format(e.to_string()))?;
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let value = serde_json::from_slice(&std::fs::read(path)?).map_err(|e| IngestError::Format(e.to_string()))?;
        let params = ParameterSet::from_json(value)?;
        for name in ["w1", "b1", "w2", "b2"] {
            params.get(name)?;
        }
        Ok(Self { params })
    }

    /// Logits for a batch of feature rows.
    fn logits(&self, x: &Tensor) -> Result<(Tensor, Tensor, Tensor), IngestError> {
        let p = &self.params;
        let pre = linear(x, p.get("w1")?, p.get("b1")?)?;
        let hidden = relu(&pre);
        let out = linear(&hidden, p.get("w2")?, p.get("b2")?)?;
        Ok((pre, hidden, out))
    }

    fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>, IngestError> {
        Ok(self.logits(x)?.2.data().iter().map(|&z| sigmoid(z)).collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from a logit, without forming `log(sigmoid)`.
fn bce(z: f64, y: bool) -> f64 {
    let t = if y { 1.0 } else { 0.0 };
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

fn features(encoder: &dyn SentenceEncoder, texts: &[&str], width: usize) -> Result<Tensor, IngestError> {
    let mut data = Vec::with_capacity(texts.len() * width);
    for t in texts {
        let f = encoder.classifier_features(t)?;
        if f.len() != width {
            return Err(IngestError::FeatureWidth {
                encoder: encoder.name().to_string(),
                expected: width,
                got: f.len(),
            });
        }
        data.extend(f);
    }
    Ok(Tensor::matrix(texts.len(), width, data)?)
}

fn mean_loss(clf: &StoryClassifier, x: &Tensor, y: &[bool]) -> Result<f64, IngestError> {
    if y.is_empty() {
        return Ok(0.0);
    }
    let (_, _, z) = clf.logits(x)?;
    Ok(z.data().iter().zip(y).map(|(&z, &y)| bce(z, y)).sum::<f64>() / y.len() as f64)
}

fn rows(x: &Tensor, idx: &[usize]) -> Tensor {
    let data = idx.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
    Tensor::matrix(idx.len(), x.cols(), data).expect("row gather keeps width")
}

/// Mini-batch Adam on binary cross-entropy, keeping the weights with the
/// lowest validation loss. When the held-out share rounds to zero texts the
/// training loss is used for selection instead.
pub fn train_story_classifier(
    labelled: &[(String, bool)],
    encoder: &dyn SentenceEncoder,
    config: &ClassifierConfig,
) -> Result<(StoryClassifier, ClassifierHistory), IngestError> {
    let positives = labelled.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == labelled.len() {
        return Err(IngestError::SingleClass);
    }
    let width = encoder.feature_width();
    let texts: Vec<&str> = labelled.iter().map(|(t, _)| t.as_str()).collect();
    let x = features(encoder, &texts, width)?;
    let y: Vec<bool> = labelled.iter().map(|(_, y)| *y).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..labelled.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (config.validation_fraction * labelled.len() as f64).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val.min(labelled.len() - 1));
    let (x_val, y_val) = (rows(&x, val_idx), val_idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let mut train_idx = train_idx.to_vec();
    let (x_sel, y_sel) = if y_val.is_empty() {
        (rows(&x, &train_idx), train_idx.iter().map(|&i| y[i]).collect())
    } else {
        (x_val, y_val)
    };

    let mut clf = StoryClassifier::new(width, config.seed);
    let mut adam = AdamState::new(&clf.params);
    let mut history = ClassifierHistory::default();
    let mut best = (mean_loss(&clf, &x_sel, &y_sel)?, clf.params.clone());
    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(config.batch.max(1)) {
            let xb = rows(&x, batch);
            let (pre, hidden, z) = clf.logits(&xb)?;
            let n = batch.len() as f64;
            let mut dz = Vec::with_capacity(batch.len());
            for (k, &i) in batch.iter().enumerate() {
                let zi = z.data()[k];
                total += bce(zi, y[i]);
                dz.push((sigmoid(zi) - if y[i] { 1.0 } else { 0.0 }) / n);
            }
            let dz = Tensor::matrix(batch.len(), 1, dz)?;
            let mut grads = Gradients::new();
            let g2 = linear_backward(&hidden, clf.params.get("w2")?, &dz)?;
            grads.accumulate("w2", &g2.dw);
            grads.accumulate("b2", &g2.db);
            let dpre = relu_backward(&pre, &g2.dx);
            let g1 = linear_backward(&xb, clf.params.get("w1")?, &dpre)?;
            grads.accumulate("w1", &g1.dw);
            grads.accumulate("b1", &g1.db);
            clf.params.set_grads(&grads)?;
            adam_step(&mut clf.params, &mut adam, config.lr);
        }
        history.train_loss.push(total / train_idx.len() as f64);
        let val = mean_loss(&clf, &x_sel, &y_sel)?;
        history.validation_loss.push(val);
        if val < best.0 {
            best = (val, clf.params.clone());
            history.best_epoch = epoch;
        }
    }
    clf.params = best.1;
    clf.params.zero_grads();
    Ok((clf, history))
}

/// `sigmoid(W2·relu(W1·f + b1) + b2)` for the encoder's classifier features.
pub fn classify_story(text: &str, classifier: &StoryClassifier, encoder: &dyn SentenceEncoder) -> Result<f64, IngestError> {
    let x = features(encoder, &[text], classifier.input_width())?;
    Ok(classifier.probabilities(&x)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores at a 0.5 decision threshold.
pub fn evaluate_story_classifier(
    labelled: &[(String, bool)],
    classifier: &StoryClassifier,
    encoder: &dyn SentenceEncoder,
) -> Result<BinaryScores, IngestError> {
    let (mut tp, mut fp, mut fn_, mut correct) = (0.0, 0.0, 0.0, 0.0);
    for (text, y) in labelled {
        let pred = classify_story(text, classifier, encoder)? >= 0.5;
        match (pred, *y) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
        if pred == *y {
            correct += 1.0;
        }
    }
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(BinaryScores {
        accuracy: ratio(correct, labelled.len() as f64),
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
    })
}
