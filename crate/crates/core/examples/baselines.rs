//! Scores every baseline on the held-out part of the synthetic text corpus.
use narrative_arc::baselines::{fit_positional, DistributionBaseline, HeuristicBaseline, RandomBaseline, SurpriseBaseline};
use narrative_arc::corpus::split_corpus;
use narrative_arc::encoders::{Channel, EncoderSet};
use narrative_arc::eval::{evaluate, System};
use narrative_arc::synthetic::{synthetic_text_corpus, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synthetic_text_corpus(&SyntheticConfig::default());
    let split = split_corpus(&corpus, [0.8, 0.0, 0.2], 0)?;
    let (train, test) = (corpus.subset(&split.train), corpus.subset(&split.test));
    let encoders = EncoderSet::reference(64, 0);

    let mut systems: Vec<Box<dyn System>> = vec![
        Box::new(RandomBaseline),
        Box::new(DistributionBaseline {
            model: fit_positional(&train)?,
        }),
        Box::new(HeuristicBaseline {
            encoder: encoders.semantic.clone(),
        }),
    ];
    for channel in [Channel::XSem, Channel::XIntent, Channel::XReact] {
        systems.push(Box::new(SurpriseBaseline {
            channel,
            encoders: encoders.clone(),
        }));
    }

    println!("{:<18} {:>10} {:>10} {:>8} {:>8}", "system", "climax F1", "resol. F1", "D clx", "D res");
    for system in &systems {
        let r = evaluate(system.as_ref(), &test, &[0, 1, 2], &serde_json::json!({}))?;
        println!(
            "{:<18} {:>10.3} {:>10.3} {:>7.1}% {:>7.1}%",
            r.system, r.climax.f1.mean, r.resolution.f1.mean, r.climax.distance.mean, r.resolution.distance.mean
        );
    }
    Ok(())
}
