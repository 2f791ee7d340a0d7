//! Turning-point distances on synopses, here built from synthetic stories
//! with the climax standing in for TP4 and the resolution for TP5.
use narrative_arc::baselines::{fit_positional, DistributionBaseline, RandomBaseline, SurpriseBaseline};
use narrative_arc::corpus::Label;
use narrative_arc::encoders::{Channel, EncoderSet};
use narrative_arc::eval::{evaluate_turning_points, read_synopses, System};
use narrative_arc::synthetic::{synthetic_text_corpus, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = synthetic_text_corpus(&SyntheticConfig::default());
    let held_out = synthetic_text_corpus(&SyntheticConfig {
        narratives: 30,
        seed: 99,
        ..Default::default()
    });
    let mut lines = String::new();
    for (n, labels) in held_out.labelled()? {
        let line = serde_json::json!({
            "id": n.id,
            "sentences": n.texts().collect::<Vec<_>>(),
            "tp4": labels.indices_of(Label::Climax),
            "tp5": labels.indices_of(Label::Resolution),
            "cast": ["I"],
        });
        lines.push_str(&format!("{line}\n"));
    }
    let synopses = read_synopses(lines.as_bytes())?;

    let systems: Vec<Box<dyn System>> = vec![
        Box::new(RandomBaseline),
        Box::new(DistributionBaseline {
            model: fit_positional(&train)?,
        }),
        Box::new(SurpriseBaseline {
            channel: Channel::XSem,
            encoders: EncoderSet::reference(64, 0),
        }),
    ];
    for system in &systems {
        let r = evaluate_turning_points(system.as_ref(), &synopses, 0)?;
        println!("{:<14} TP4 {:>5.1}%  TP5 {:>5.1}%", r.system, r.tp4_distance, r.tp5_distance);
    }
    Ok(())
}
