use serde::{Deserialize, Serialize};

use super::metrics::set_distance;
use super::EvalError;
use crate::corpus::{AnnotationRecord, Label};

/// All annotations collected for one narrative.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedNarrative {
    pub narrative_id: String,
    pub sentence_count: usize,
    pub records: Vec<AnnotationRecord>,
}

fn require_class(label: Label) -> Result<(), EvalError> {
    match label {
        Label::None => Err(EvalError::NotAClass(label)),
        _ => Ok(()),
    }
}

fn require_pairs(items: &[AnnotatedNarrative]) -> Result<(), EvalError> {
    if items.is_empty() {
        return Err(EvalError::Empty);
    }
    for n in items {
        if n.records.len() < 2 {
            return Err(EvalError::TooFewAnnotators {
                narrative_id: n.narrative_id.clone(),
                count: n.records.len(),
            });
        }
    }
    Ok(())
}

/// Mean over sentences of the fraction of annotator pairs that agree on
/// whether the sentence belongs to `label`.
pub fn percentage_agreement(items: &[AnnotatedNarrative], label: Label) -> Result<f64, EvalError> {
    require_class(label)?;
    require_pairs(items)?;
    let mut total = 0.0;
    let mut sentences = 0usize;
    for n in items {
        let k = n.records.len();
        let pairs = (k * (k - 1) / 2) as f64;
        for i in 0..n.sentence_count {
            let inside = n.records.iter().filter(|r| r.indices(label).contains(&i)).count();
            let outside = k - inside;
            let agreeing = inside * inside.saturating_sub(1) / 2 + outside * outside.saturating_sub(1) / 2;
            total += agreeing as f64 / pairs;
            sentences += 1;
        }
    }
    if sentences == 0 {
        return Err(EvalError::Empty);
    }
    Ok(total / sentences as f64)
}

/// Fleiss' kappa from an items × categories count table. Every row must sum
/// to the same rater count n ≥ 2.
pub fn fleiss_kappa(table: &[Vec<usize>]) -> Result<f64, EvalError> {
    let first = table.first().ok_or(EvalError::Empty)?;
    let n: usize = first.iter().sum();
    if n < 2 {
        return Err(EvalError::VaryingRaters(format!("items need at least 2 ratings, got {n}")));
    }
    let categories = first.len();
    let mut column_totals = vec![0usize; categories];
    let mut p_bar = 0.0;
    for (i, row) in table.iter().enumerate() {
        if row.len() != categories || row.iter().sum::<usize>() != n {
            return Err(EvalError::VaryingRaters(format!(
                "item {i} has {} ratings over {} categories, expected {n} over {categories}",
                row.iter().sum::<usize>(),
                row.len()
            )));
        }
        let agree: usize = row.iter().map(|&c| c * c.saturating_sub(1)).sum();
        p_bar += agree as f64 / (n * (n - 1)) as f64;
        for (t, &c) in column_totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    let items = table.len() as f64;
    p_bar /= items;
    let total = items * n as f64;
    let p_e: f64 = column_totals.iter().map(|&t| (t as f64 / total).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(if (1.0 - p_bar).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Three-way kappa: each annotator's sets collapse to one label per sentence
/// with climax taking precedence.
pub fn label_kappa(items: &[AnnotatedNarrative]) -> Result<f64, EvalError> {
    require_pairs(items)?;
    let mut table = Vec::new();
    for n in items {
        for i in 0..n.sentence_count {
            let mut row = vec![0usize; 3];
            for r in &n.records {
                row[r.category(i).index()] += 1;
            }
            table.push(row);
        }
    }
    fleiss_kappa(&table)
}

/// Binary kappa for membership in `label`'s index set.
pub fn class_kappa(items: &[AnnotatedNarrative], label: Label) -> Result<f64, EvalError> {
    require_class(label)?;
    require_pairs(items)?;
    let mut table = Vec::new();
    for n in items {
        for i in 0..n.sentence_count {
            let inside = n.records.iter().filter(|r| r.indices(label).contains(&i)).count();
            table.push(vec![inside, n.records.len() - inside]);
        }
    }
    fleiss_kappa(&table)
}

/// Mean set distance over every annotator pair of every narrative, in percent.
pub fn annotator_distance(items: &[AnnotatedNarrative], label: Label) -> Result<f64, EvalError> {
    require_class(label)?;
    require_pairs(items)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for n in items {
        for (a, ra) in n.records.iter().enumerate() {
            for rb in &n.records[a + 1..] {
                total += set_distance(ra.indices(label), rb.indices(label), n.sentence_count);
                pairs += 1;
            }
        }
    }
    Ok(100.0 * total / pairs as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAgreement {
    pub percentage_agreement: f64,
    pub kappa: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub narratives: usize,
    pub sentences: usize,
    pub annotations: usize,
    /// Kappa over the three-way label of each sentence.
    pub kappa: f64,
    pub climax: ClassAgreement,
    pub resolution: ClassAgreement,
}

pub fn agreement_report(items: &[AnnotatedNarrative]) -> Result<AgreementReport, EvalError> {
    require_pairs(items)?;
    // kappa needs the same rater count on every item
    let n = items[0].records.len();
    if let Some(bad) = items.iter().find(|i| i.records.len() != n) {
        return Err(EvalError::VaryingRaters(format!(
            "narrative `{}` has {} annotators, expected {n}",
            bad.narrative_id,
            bad.records.len()
        )));
    }
    let class = |label| -> Result<ClassAgreement, EvalError> {
        Ok(ClassAgreement {
            percentage_agreement: percentage_agreement(items, label)?,
            kappa: class_kappa(items, label)?,
            distance: annotator_distance(items, label)?,
        })
    };
    Ok(AgreementReport {
        narratives: items.len(),
        sentences: items.iter().map(|i| i.sentence_count).sum(),
        annotations: items.iter().map(|i| i.records.len()).sum(),
        kappa: label_kappa(items)?,
        climax: class(Label::Climax)?,
        resolution: class(Label::Resolution)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(annotator: &str, climax: &[usize], resolution: &[usize]) -> AnnotationRecord {
        AnnotationRecord::new("n", annotator, climax.iter().copied(), resolution.iter().copied())
    }

    fn item(len: usize, records: Vec<AnnotationRecord>) -> AnnotatedNarrative {
        AnnotatedNarrative {
            narrative_id: "n".into(),
            sentence_count: len,
            records,
        }
    }

    #[test]
    fn worked_fleiss_example() {
        let table = vec![vec![3, 0, 0], vec![0, 3, 0], vec![3, 0, 0], vec![1, 1, 1]];
        let expected = (0.75 - 66.0 / 144.0) / (1.0 - 66.0 / 144.0);
        let k = fleiss_kappa(&table).unwrap();
        assert!((k - expected).abs() < 1e-12);
        assert!((k - 0.5385).abs() < 1e-4);
    }

    #[test]
    fn degenerate_and_invalid_tables() {
        assert_eq!(fleiss_kappa(&[vec![3, 0, 0], vec![3, 0, 0]]).unwrap(), 1.0);
        assert!(fleiss_kappa(&[vec![3, 0], vec![2, 0]]).is_err());
        assert!(fleiss_kappa(&[vec![1, 0]]).is_err());
        assert!(fleiss_kappa(&[]).is_err());
    }

    #[test]
    fn identical_annotators_agree_perfectly() {
        let it = vec![item(5, vec![rec("a", &[2], &[4]), rec("b", &[2], &[4]), rec("c", &[2], &[4])])];
        let r = agreement_report(&it).unwrap();
        assert_eq!(r.kappa, 1.0);
        for c in [&r.climax, &r.resolution] {
            assert_eq!((c.percentage_agreement, c.kappa, c.distance), (1.0, 1.0, 0.0));
        }
    }

    #[test]
    fn pairwise_agreement_on_one_sentence() {
        // memberships (in, in, out): one agreeing pair out of three
        let it = vec![item(1, vec![rec("a", &[0], &[]), rec("b", &[0], &[]), rec("c", &[], &[])])];
        assert!((percentage_agreement(&it, Label::Climax).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(percentage_agreement(&[item(1, vec![rec("a", &[0], &[])])], Label::Climax).is_err());
    }

    #[test]
    fn distance_between_two_annotators() {
        let it = vec![item(20, vec![rec("a", &[4], &[]), rec("b", &[6], &[])])];
        assert!((annotator_distance(&it, Label::Climax).unwrap() - 10.0).abs() < 1e-12);
    }
}
