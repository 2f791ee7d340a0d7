use super::BaselineError;
use crate::corpus::{Label, LabelSequence, Narrative};
use crate::encoders::{Channel, EncoderSet, MentalAttribute};
use crate::eval::System;
use crate::neuralcore::Tensor;

/// `s₀ = 0`, `sᵢ = ‖eᵢ − eᵢ₋₁‖² / d`.
pub fn surprise_series(embeddings: &Tensor) -> Vec<f64> {
    let d = embeddings.cols().max(1) as f64;
    (0..embeddings.rows())
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            let (a, b) = (embeddings.row(i), embeddings.row(i - 1));
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / d
        })
        .collect()
}

/// Climax at the largest surprise (earliest on ties); resolution at the
/// steepest later drop (latest on ties).
pub fn surprise_baseline(id: &str, embeddings: &Tensor) -> LabelSequence {
    let len = embeddings.rows();
    let mut labels = LabelSequence::all_none(id, len);
    if len < 2 {
        return labels;
    }
    let s = surprise_series(embeddings);
    let mut climax = 0;
    for i in 1..len {
        if s[i] > s[climax] {
            climax = i;
        }
    }
    labels.labels[climax] = Label::Climax;
    if climax + 1 < len {
        let mut best = climax + 1;
        for j in climax + 1..len {
            if s[j - 1] - s[j] >= s[best - 1] - s[best] {
                best = j;
            }
        }
        labels.labels[best] = Label::Resolution;
    }
    labels
}

/// Surprise decoding over one embedding channel.
pub struct SurpriseBaseline {
    pub channel: Channel,
    pub encoders: EncoderSet,
}

impl SurpriseBaseline {
    pub fn embeddings(&self, narrative: &Narrative, entity: &str) -> Result<Tensor, BaselineError> {
        Ok(match self.channel {
            Channel::XSem => self.encoders.semantic.encode(narrative)?,
            Channel::XIntent => self.encoders.mental.encode_story(narrative, entity, MentalAttribute::XIntent)?,
            Channel::XReact => self.encoders.mental.encode_story(narrative, entity, MentalAttribute::XReact)?,
        })
    }
}

impl System for SurpriseBaseline {
    fn name(&self) -> String {
        format!("surprise:{}", self.channel.as_str())
    }

    fn predict(
        &self,
        narrative: &Narrative,
        entity: &str,
        _: u64,
    ) -> Result<LabelSequence, Box<dyn std::error::Error + Send + Sync>> {
        Ok(surprise_baseline(&narrative.id, &self.embeddings(narrative, entity)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::step_embeddings;
    use proptest::prelude::*;

    fn rows(r: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn series_formula() {
        let e = rows(&[&[1.0, 2.0], &[1.0, 2.0], &[4.0, -2.0]]);
        assert_eq!(surprise_series(&e), vec![0.0, 0.0, 25.0 / 2.0]);
        let c = rows(&[&[3.0, 3.0][..]; 4]);
        assert!(surprise_series(&c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_jump_is_the_climax() {
        for jump in 1..8 {
            let l = surprise_baseline("s", &step_embeddings(8, jump, 6, jump as u64));
            assert_eq!(l.labels[jump], Label::Climax);
        }
    }

    #[test]
    fn boundary_and_tie_rules() {
        // increasing surprise: climax last, no resolution
        let e = rows(&[&[0.0], &[1.0], &[3.0], &[6.0]]);
        let l = surprise_baseline("m", &e);
        assert_eq!(l.labels, vec![Label::None, Label::None, Label::None, Label::Climax]);
        // equal jumps at 1 and 3; the drop after 1 is the same at 2 and 4, latest wins
        let e = rows(&[&[0.0], &[1.0], &[1.0], &[2.0], &[2.0]]);
        let l = surprise_baseline("t", &e);
        assert_eq!(l.labels, vec![Label::None, Label::Climax, Label::None, Label::None, Label::Resolution]);
        assert!(surprise_baseline("one", &rows(&[&[1.0]])).labels == vec![Label::None]);
    }

    proptest! {
        #[test]
        fn scaling_scales_the_series(data in proptest::collection::vec(-5.0f64..5.0, 12), k in 0.1f64..4.0) {
            let e = Tensor::matrix(4, 3, data.clone()).unwrap();
            let scaled = e.map(|v| v * k);
            let (s, t) = (surprise_series(&e), surprise_series(&scaled));
            prop_assert_eq!(s[0], 0.0);
            for (a, b) in s.iter().zip(&t) {
                prop_assert!((a * k * k - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            prop_assert_eq!(surprise_baseline("p", &e).labels.len(), 4);
        }
    }
}
