use super::{AnnotationRecord, CorpusError, Label, LabelSequence};

/// Majority vote over annotators: a sentence takes a label only when strictly
/// more than half of the records include it. Climax wins when a sentence
/// clears both thresholds.
pub fn merge_annotations(records: &[AnnotationRecord], sentence_count: usize) -> Result<LabelSequence, CorpusError> {
    let first = records.first().ok_or(CorpusError::NoRecords)?;
    let mut ids: Vec<String> = records.iter().map(|r| r.narrative_id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() > 1 {
        return Err(CorpusError::MixedNarratives(ids));
    }
    let n = records.len();
    let labels = (0..sentence_count)
        .map(|i| {
            let climax = records.iter().filter(|r| r.climax_indices.contains(&i)).count();
            let resolution = records.iter().filter(|r| r.resolution_indices.contains(&i)).count();
            if 2 * climax > n {
                Label::Climax
            } else if 2 * resolution > n {
                Label::Resolution
            } else {
                Label::None
            }
        })
        .collect();
    Ok(LabelSequence::new(first.narrative_id.clone(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(annotator: &str, climax: &[usize], resolution: &[usize]) -> AnnotationRecord {
        AnnotationRecord::new("n", annotator, climax.iter().copied(), resolution.iter().copied())
    }

    #[test]
    fn unanimous_and_majority_and_minority() {
        let all = [rec("a", &[5], &[]), rec("b", &[5], &[]), rec("c", &[5], &[])];
        assert_eq!(merge_annotations(&all, 8).unwrap().labels[5], Label::Climax);
        let two = [rec("a", &[5], &[]), rec("b", &[5], &[]), rec("c", &[4], &[])];
        assert_eq!(merge_annotations(&two, 8).unwrap().labels[5], Label::Climax);
        let one = [rec("a", &[5], &[]), rec("b", &[3], &[]), rec("c", &[4], &[])];
        assert_eq!(merge_annotations(&one, 8).unwrap().labels[5], Label::None);
    }

    #[test]
    fn ties_are_none_and_climax_wins_double_majority() {
        let tie = [rec("a", &[1], &[]), rec("b", &[], &[2])];
        assert_eq!(merge_annotations(&tie, 3).unwrap().labels, vec![Label::None; 3]);
        // three of five mark sentence 0 climax, three of five mark it resolution
        let mut rs = vec![rec("a", &[0], &[]), rec("b", &[0], &[]), rec("c", &[0], &[])];
        rs.push(rec("d", &[], &[0]));
        rs.push(rec("e", &[], &[0]));
        let mut extra = rec("c", &[0], &[]);
        extra.resolution_indices.insert(0);
        rs[2] = extra;
        assert_eq!(merge_annotations(&rs, 1).unwrap().labels[0], Label::Climax);
    }

    #[test]
    fn mixed_narratives_rejected() {
        let mut other = rec("b", &[], &[]);
        other.narrative_id = "m".into();
        assert!(matches!(
            merge_annotations(&[rec("a", &[], &[]), other], 2),
            Err(CorpusError::MixedNarratives(_))
        ));
        assert!(matches!(merge_annotations(&[], 2), Err(CorpusError::NoRecords)));
    }

    proptest! {
        #[test]
        fn labels_need_strict_majority(
            votes in proptest::collection::vec((proptest::collection::btree_set(0usize..6, 0..3), proptest::collection::btree_set(0usize..6, 0..3)), 1..7)
        ) {
            let records: Vec<AnnotationRecord> = votes
                .iter()
                .enumerate()
                .map(|(i, (c, r))| AnnotationRecord::new("n", format!("a{i}"), c.iter().copied(), r.difference(c).copied()))
                .collect();
            let merged = merge_annotations(&records, 6).unwrap();
            prop_assert_eq!(merged.len(), 6);
            let n = records.len();
            for (i, label) in merged.labels.iter().enumerate() {
                if *label != Label::None {
                    let votes = records.iter().filter(|r| r.indices(*label).contains(&i)).count();
                    prop_assert!(2 * votes > n);
                }
            }
        }
    }
}
