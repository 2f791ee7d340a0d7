use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Label, LabelSequence};

/// One-vs-rest confusion counts and scores for a single label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

fn check_aligned(preds: &[LabelSequence], golds: &[LabelSequence]) -> Result<(), EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::Misaligned(format!(
            "{} predictions for {} gold sequences",
            preds.len(),
            golds.len()
        )));
    }
    for (p, g) in preds.iter().zip(golds) {
        if p.len() != g.len() {
            return Err(EvalError::Misaligned(format!(
                "narrative `{}`: {} predicted labels, {} gold",
                g.narrative_id,
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

/// Sentence-level one-vs-rest scores per label, pooled over all narratives.
/// Indexed by [`Label::index`].
pub fn per_class_f1(preds: &[LabelSequence], golds: &[LabelSequence]) -> Result<[ClassScore; 3], EvalError> {
    check_aligned(preds, golds)?;
    let mut counts = [(0usize, 0usize, 0usize); 3];
    for (p, g) in preds.iter().zip(golds) {
        for (&pl, &gl) in p.labels.iter().zip(&g.labels) {
            if pl == gl {
                counts[pl.index()].0 += 1;
            } else {
                counts[pl.index()].1 += 1;
                counts[gl.index()].2 += 1;
            }
        }
    }
    Ok(counts.map(|(tp, fp, fn_)| ClassScore::from_counts(tp, fp, fn_)))
}

/// Distance between two index sets in a story of `len` sentences: 0 when both
/// are empty, 1 when exactly one is, else the closest pair's gap over `len`.
pub fn set_distance(a: &BTreeSet<usize>, b: &BTreeSet<usize>, len: usize) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let mut best = usize::MAX;
            for &x in a {
                // b is sorted: the nearest neighbour is next to x's insertion point
                if let Some(&y) = b.range(x..).next() {
                    best = best.min(y - x);
                }
                if let Some(&y) = b.range(..x).next_back() {
                    best = best.min(x - y);
                }
            }
            best as f64 / len as f64
        }
    }
}

/// Mean set distance for `label` over narratives, in percent.
pub fn mean_annotation_distance(preds: &[LabelSequence], golds: &[LabelSequence], label: Label) -> Result<f64, EvalError> {
    check_aligned(preds, golds)?;
    if golds.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| set_distance(&p.indices_of(label), &g.indices_of(label), g.len()))
        .sum();
    Ok(100.0 * total / golds.len() as f64)
}
