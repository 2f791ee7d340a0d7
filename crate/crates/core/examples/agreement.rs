//! Inter-annotator agreement on a handful of hand-written annotations.
use narrative_arc::corpus::{AnnotationRecord, Label};
use narrative_arc::eval::{agreement_report, fleiss_kappa, AnnotatedNarrative};

fn narrative(id: &str, len: usize, marks: &[(&[usize], &[usize])]) -> AnnotatedNarrative {
    AnnotatedNarrative {
        narrative_id: id.into(),
        sentence_count: len,
        records: marks
            .iter()
            .enumerate()
            .map(|(a, (c, r))| AnnotationRecord::new(id, format!("worker-{a}"), c.iter().copied(), r.iter().copied()))
            .collect(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // four items rated by three raters over three categories
    let table = vec![vec![3, 0, 0], vec![0, 3, 0], vec![3, 0, 0], vec![1, 1, 1]];
    println!("kappa for the count table: {:.4}", fleiss_kappa(&table)?);

    let items = vec![
        narrative("s1", 6, &[(&[3], &[5]), (&[3], &[5]), (&[2, 3], &[5])]),
        narrative("s2", 8, &[(&[4], &[7]), (&[5], &[6, 7]), (&[4], &[])]),
        narrative("s3", 5, &[(&[], &[4]), (&[1], &[4]), (&[1], &[4])]),
    ];
    let report = agreement_report(&items)?;
    println!("{} narratives, {} sentences, {} annotations", report.narratives, report.sentences, report.annotations);
    println!("three-way kappa {:.3}", report.kappa);
    for (label, class) in [(Label::Climax, &report.climax), (Label::Resolution, &report.resolution)] {
        println!(
            "{:>10}: agreement {:.3}, kappa {:.3}, annotator distance {:.1}%",
            label.as_str(),
            class.percentage_agreement,
            class.kappa,
            class.distance
        );
    }
    Ok(())
}
