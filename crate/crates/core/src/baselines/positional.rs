use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::corpus::{normalized_position, position_bin, Corpus, Label, LabelSequence, Narrative};
use crate::eval::System;

pub const POSITION_BINS: usize = 20;

/// Histograms of gold climax and resolution positions and their peaks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionalModel {
    pub bins: usize,
    pub climax_histogram: Vec<usize>,
    pub resolution_histogram: Vec<usize>,
    /// Centre of the fullest climax bin, in `[0, 1]`.
    pub climax_peak: f64,
    pub resolution_peak: f64,
}

fn peak(histogram: &[usize]) -> usize {
    // first maximum wins ties
    let max = histogram.iter().copied().max().unwrap_or(0);
    histogram.iter().position(|&c| c == max).unwrap_or(0)
}

pub fn fit_positional(corpus: &Corpus) -> Result<PositionalModel, BaselineError> {
    let mut climax = vec![0; POSITION_BINS];
    let mut resolution = vec![0; POSITION_BINS];
    for (narrative, labels) in corpus.labelled()? {
        for (i, label) in labels.labels.iter().enumerate() {
            let bin = position_bin(normalized_position(i, narrative.len()), POSITION_BINS);
            match label {
                Label::Climax => climax[bin] += 1,
                Label::Resolution => resolution[bin] += 1,
                Label::None => {}
            }
        }
    }
    for (label, h) in [(Label::Climax, &climax), (Label::Resolution, &resolution)] {
        if h.iter().all(|&c| c == 0) {
            return Err(BaselineError::AbsentClass(label));
        }
    }
    let center = |bin: usize| (bin as f64 + 0.5) / POSITION_BINS as f64;
    Ok(PositionalModel {
        bins: POSITION_BINS,
        climax_peak: center(peak(&climax)),
        resolution_peak: center(peak(&resolution)),
        climax_histogram: climax,
        resolution_histogram: resolution,
    })
}

/// Labels the sentences nearest each peak; climax wins a collision.
pub fn apply_positional(model: &PositionalModel, narrative: &Narrative) -> LabelSequence {
    let len = narrative.len();
    let at = |rho: f64| (rho * (len - 1) as f64).round() as usize;
    let mut labels = LabelSequence::all_none(narrative.id.clone(), len);
    labels.labels[at(model.resolution_peak)] = Label::Resolution;
    labels.labels[at(model.climax_peak)] = Label::Climax;
    labels
}

pub struct DistributionBaseline {
    pub model: PositionalModel,
}

impl System for DistributionBaseline {
    fn name(&self) -> String {
        "distribution".into()
    }

    fn predict(
        &self,
        narrative: &Narrative,
        _: &str,
        _: u64,
    ) -> Result<LabelSequence, Box<dyn std::error::Error + Send + Sync>> {
        Ok(apply_positional(&self.model, narrative))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(items: &[(usize, usize, usize)]) -> Corpus {
        let mut c = Corpus::new();
        for (k, &(len, climax, resolution)) in items.iter().enumerate() {
            let id = format!("n{k}");
            let n = Narrative::new(id.clone(), "", (0..len).map(|i| format!("s{i}"))).unwrap();
            let mut l = LabelSequence::all_none(id, len);
            l.labels[resolution] = Label::Resolution;
            l.labels[climax] = Label::Climax;
            c.push(n, Some(l)).unwrap();
        }
        c
    }

    fn model(climax_peak: f64, resolution_peak: f64) -> PositionalModel {
        PositionalModel {
            bins: POSITION_BINS,
            climax_histogram: vec![],
            resolution_histogram: vec![],
            climax_peak,
            resolution_peak,
        }
    }

    #[test]
    fn climaxes_at_sixty_percent() {
        // index 6 of 11 sentences sits at 0.6, bin 12 of 20
        let m = fit_positional(&corpus(&[(11, 6, 10), (11, 6, 9), (6, 3, 5)])).unwrap();
        assert_eq!(peak(&m.climax_histogram), 12);
        assert!((m.climax_peak - 0.625).abs() < 1e-12);
        assert_eq!(m.climax_histogram.iter().sum::<usize>(), 3);
        assert!((m.resolution_peak - 0.975).abs() < 1e-12);
    }

    #[test]
    fn uniform_positions_pick_the_first_bin() {
        let items: Vec<_> = (0..20).map(|i| (20, i, (i + 1) % 20)).collect();
        let m = fit_positional(&corpus(&items)).unwrap();
        assert!((m.climax_peak - 0.025).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_an_error() {
        let mut c = Corpus::new();
        let n = Narrative::new("a", "", ["x", "y"]).unwrap();
        c.push(n, Some(LabelSequence::new("a", vec![Label::Climax, Label::None]))).unwrap();
        assert!(matches!(fit_positional(&c), Err(BaselineError::AbsentClass(Label::Resolution))));
    }

    #[test]
    fn rounding_and_collisions() {
        let n = Narrative::new("n", "", (0..10).map(|i| format!("s{i}"))).unwrap();
        let l = apply_positional(&model(0.6, 0.9), &n);
        assert_eq!(l.labels[5], Label::Climax);
        assert_eq!(l.labels[8], Label::Resolution);
        let l = apply_positional(&model(0.5, 0.5), &n);
        assert_eq!((l.count(Label::Climax), l.count(Label::Resolution)), (1, 0));
        let one = Narrative::new("o", "", ["x"]).unwrap();
        assert_eq!(apply_positional(&model(0.3, 0.9), &one).labels, vec![Label::Climax]);
    }

    proptest! {
        #[test]
        fn output_depends_only_on_length(len in 1usize..40, c in 0.0f64..=1.0, r in 0.0f64..=1.0) {
            let a = Narrative::new("a", "", (0..len).map(|i| format!("a{i}"))).unwrap();
            let b = Narrative::new("b", "t", (0..len).map(|i| format!("other {i}"))).unwrap();
            let m = model(c, r);
            let (la, lb) = (apply_positional(&m, &a), apply_positional(&m, &b));
            prop_assert_eq!(&la.labels, &lb.labels);
            prop_assert!(la.count(Label::Climax) == 1 && la.count(Label::Resolution) <= 1);
        }
    }
}
