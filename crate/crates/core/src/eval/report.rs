use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{per_class_f1, set_distance};
use super::EvalError;
use crate::corpus::{Corpus, Label, LabelSequence, Narrative};
use crate::encoders::{DEFAULT_ENTITY, PROTAGONIST_KEY};

/// Anything that labels narratives: a trained model or a baseline.
pub trait System {
    fn name(&self) -> String;
    fn predict(
        &self,
        narrative: &Narrative,
        entity: &str,
        seed: u64,
    ) -> Result<LabelSequence, Box<dyn std::error::Error + Send + Sync>>;
    /// Stochastic systems are run once per requested seed.
    fn stochastic(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub f1: Stat,
    pub precision: Stat,
    pub recall: Stat,
    /// Mean annotation distance in percent.
    pub distance: Stat,
    pub gold_sentences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarrativeBreakdown {
    pub id: String,
    pub climax_distance: f64,
    pub resolution_distance: f64,
    pub predicted: Vec<Label>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub system: String,
    pub narratives: usize,
    pub sentences: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub climax: ClassResult,
    pub resolution: ClassResult,
    /// Breakdown of the first run.
    pub per_narrative: Vec<NarrativeBreakdown>,
    pub config_hash: String,
}

impl EvaluationReport {
    pub fn class(&self, label: Label) -> Option<&ClassResult> {
        match label {
            Label::Climax => Some(&self.climax),
            Label::Resolution => Some(&self.resolution),
            Label::None => None,
        }
    }
}

/// Hex SHA-256 of the compact JSON form (object keys are sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("json values serialise");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

struct RunScores {
    f1: [f64; 2],
    precision: [f64; 2],
    recall: [f64; 2],
    distance: [f64; 2],
    breakdown: Vec<NarrativeBreakdown>,
}

const SCORED: [Label; 2] = [Label::Climax, Label::Resolution];

fn score_run(preds: &[LabelSequence], golds: &[LabelSequence]) -> Result<RunScores, EvalError> {
    let scores = per_class_f1(preds, golds)?;
    let mut breakdown = Vec::with_capacity(golds.len());
    let mut dist_sum = [0.0; 2];
    for (p, g) in preds.iter().zip(golds) {
        let d: Vec<f64> = SCORED
            .iter()
            .map(|&l| 100.0 * set_distance(&p.indices_of(l), &g.indices_of(l), g.len()))
            .collect();
        dist_sum[0] += d[0];
        dist_sum[1] += d[1];
        breakdown.push(NarrativeBreakdown {
            id: g.narrative_id.clone(),
            climax_distance: d[0],
            resolution_distance: d[1],
            predicted: p.labels.clone(),
        });
    }
    let n = golds.len().max(1) as f64;
    let pick = |f: fn(&super::ClassScore) -> f64| SCORED.map(|l| f(&scores[l.index()]));
    Ok(RunScores {
        f1: pick(|s| s.f1),
        precision: pick(|s| s.precision),
        recall: pick(|s| s.recall),
        distance: dist_sum.map(|d| d / n),
        breakdown,
    })
}

fn assemble(
    system: String,
    golds: &[LabelSequence],
    seeds: Vec<u64>,
    runs: Vec<RunScores>,
    config: &serde_json::Value,
) -> EvaluationReport {
    let class = |k: usize, label: Label| ClassResult {
        f1: Stat::of(&runs.iter().map(|r| r.f1[k]).collect::<Vec<_>>()),
        precision: Stat::of(&runs.iter().map(|r| r.precision[k]).collect::<Vec<_>>()),
        recall: Stat::of(&runs.iter().map(|r| r.recall[k]).collect::<Vec<_>>()),
        distance: Stat::of(&runs.iter().map(|r| r.distance[k]).collect::<Vec<_>>()),
        gold_sentences: golds.iter().map(|g| g.count(label)).sum(),
    };
    EvaluationReport {
        system,
        narratives: golds.len(),
        sentences: golds.iter().map(LabelSequence::len).sum(),
        runs: runs.len(),
        seeds,
        climax: class(0, Label::Climax),
        resolution: class(1, Label::Resolution),
        per_narrative: runs.into_iter().next().map(|r| r.breakdown).unwrap_or_default(),
        config_hash: config_hash(config),
    }
}

/// Runs `system` over every labelled narrative of `corpus`, once per seed if
/// the system is stochastic and once otherwise.
pub fn evaluate(
    system: &dyn System,
    corpus: &Corpus,
    seeds: &[u64],
    config: &serde_json::Value,
) -> Result<EvaluationReport, EvalError> {
    let labelled = corpus.labelled()?;
    if labelled.is_empty() {
        return Err(EvalError::Empty);
    }
    let seeds: Vec<u64> = match (system.stochastic(), seeds.first()) {
        (_, None) => vec![0],
        (true, Some(_)) => seeds.to_vec(),
        (false, Some(&s)) => vec![s],
    };
    let golds: Vec<LabelSequence> = labelled.iter().map(|(_, l)| (*l).clone()).collect();
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let mut preds = Vec::with_capacity(labelled.len());
        for (n, _) in &labelled {
            let entity = n.meta.get(PROTAGONIST_KEY).map_or(DEFAULT_ENTITY, String::as_str);
            let p = system.predict(n, entity, seed).map_err(|e| EvalError::System {
                narrative_id: n.id.clone(),
                message: e.to_string(),
            })?;
            preds.push(p);
        }
        runs.push(score_run(&preds, &golds)?);
    }
    Ok(assemble(system.name(), &golds, seeds, runs, config))
}

/// Scores already-computed predictions, matched to golds by narrative id.
pub fn evaluate_predictions(
    system: &str,
    preds: &[LabelSequence],
    golds: &[LabelSequence],
    config: &serde_json::Value,
) -> Result<EvaluationReport, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let by_id: std::collections::BTreeMap<&str, &LabelSequence> =
        preds.iter().map(|p| (p.narrative_id.as_str(), p)).collect();
    let mut aligned = Vec::with_capacity(golds.len());
    for g in golds {
        let p = by_id
            .get(g.narrative_id.as_str())
            .ok_or_else(|| EvalError::Misaligned(format!("no prediction for `{}`", g.narrative_id)))?;
        aligned.push((*p).clone());
    }
    let run = score_run(&aligned, golds)?;
    Ok(assemble(system.to_string(), golds, vec![], vec![run], config))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oracle<'a>(&'a Corpus);

    impl System for Oracle<'_> {
        fn name(&self) -> String {
            "oracle".into()
        }
        fn predict(
            &self,
            n: &Narrative,
            _: &str,
            _: u64,
        ) -> Result<LabelSequence, Box<dyn std::error::Error + Send + Sync>> {
            Ok(self.0.get(&n.id).unwrap().labels.clone().unwrap())
        }
    }

    fn corpus() -> Corpus {
        let mut c = Corpus::new();
        for i in 0..4 {
            let n = Narrative::new(format!("n{i}"), "", ["a.", "b.", "c.", "d."]).unwrap();
            let mut labels = vec![Label::None; 4];
            labels[1 + i % 2] = Label::Climax;
            labels[3] = Label::Resolution;
            c.push(n, Some(LabelSequence::new(format!("n{i}"), labels))).unwrap();
        }
        c
    }

    #[test]
    fn perfect_system_scores_one_and_zero_distance() {
        let c = corpus();
        let r = evaluate(&Oracle(&c), &c, &[1, 2, 3], &serde_json::json!({"k": 1})).unwrap();
        assert_eq!(r.runs, 1);
        for class in [&r.climax, &r.resolution] {
            assert_eq!(class.f1.mean, 1.0);
            assert_eq!(class.distance.mean, 0.0);
        }
        assert_eq!(r.climax.gold_sentences, 4);
        assert_eq!(r.per_narrative.len(), 4);
        assert_eq!(r.config_hash.len(), 64);
    }

    #[test]
    fn stats_use_sample_deviation() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[5.0]).std, 0.0);
    }

    #[test]
    fn predictions_are_matched_by_id() {
        let c = corpus();
        let golds: Vec<LabelSequence> = c.entries().iter().map(|e| e.labels.clone().unwrap()).collect();
        let mut preds = golds.clone();
        preds.reverse();
        let r = evaluate_predictions("file", &preds, &golds, &serde_json::Value::Null).unwrap();
        assert_eq!(r.climax.f1.mean, 1.0);
        assert!(evaluate_predictions("file", &preds[1..], &golds, &serde_json::Value::Null).is_err());
    }
}
