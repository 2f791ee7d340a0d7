use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Label};

/// Sentence position scaled so the first sentence is 0 and the last is 1.
pub fn normalized_position(index: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        index as f64 / (len - 1) as f64
    }
}

/// Equal-width bin of `[0, 1]` holding `position`; 1.0 lands in the last bin.
pub fn position_bin(position: f64, bins: usize) -> usize {
    ((position * bins as f64).floor() as usize).min(bins - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionHistogram {
    pub bins: usize,
    pub climax: Vec<usize>,
    pub resolution: Vec<usize>,
}

impl PositionHistogram {
    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) / self.bins as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub narratives: usize,
    pub sentences: usize,
    pub climax_sentences: usize,
    pub resolution_sentences: usize,
    /// Absent when no sentence carries the label.
    pub mean_climax_position: Option<f64>,
    pub mean_resolution_position: Option<f64>,
    pub histogram: PositionHistogram,
}

pub fn corpus_stats(corpus: &Corpus, bins: usize) -> Result<CorpusStats, CorpusError> {
    let bins = bins.max(1);
    let labelled = corpus.labelled()?;
    let mut stats = CorpusStats {
        narratives: labelled.len(),
        sentences: 0,
        climax_sentences: 0,
        resolution_sentences: 0,
        mean_climax_position: None,
        mean_resolution_position: None,
        histogram: PositionHistogram {
            bins,
            climax: vec![0; bins],
            resolution: vec![0; bins],
        },
    };
    let (mut climax_sum, mut resolution_sum) = (0.0, 0.0);
    for (narrative, labels) in labelled {
        let len = narrative.len();
        stats.sentences += len;
        for (i, label) in labels.labels.iter().enumerate() {
            let pos = normalized_position(i, len);
            let bin = position_bin(pos, bins);
            match label {
                Label::Climax => {
                    stats.climax_sentences += 1;
                    climax_sum += pos;
                    stats.histogram.climax[bin] += 1;
                }
                Label::Resolution => {
                    stats.resolution_sentences += 1;
                    resolution_sum += pos;
                    stats.histogram.resolution[bin] += 1;
                }
                Label::None => {}
            }
        }
    }
    stats.mean_climax_position = (stats.climax_sentences > 0).then(|| climax_sum / stats.climax_sentences as f64);
    stats.mean_resolution_position =
        (stats.resolution_sentences > 0).then(|| resolution_sum / stats.resolution_sentences as f64);
    Ok(stats)
}
