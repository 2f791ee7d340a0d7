//! Trains on a task whose signal lives only in the intent channel and shows
//! where the fusion token looks.
use narrative_arc::corpus::split_corpus;
use narrative_arc::msense::{extract_fusion_attention, train, MSenseConfig, MSenseModel, SLOT_NAMES};
use narrative_arc::synthetic::{synthetic_corpus, SyntheticConfig, SyntheticTask};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let config = MSenseConfig { seed, ..Default::default() };
    let syn = synthetic_corpus(&SyntheticConfig {
        width: config.d,
        task: SyntheticTask::IntentOnly,
        ..Default::default()
    })?;
    let split = split_corpus(&syn.corpus, [0.7, 0.1, 0.2], 0)?;
    let before = MSenseModel::new(config)?;
    let (after, history) = train(
        before.clone(),
        &syn.corpus.subset(&split.train),
        &syn.corpus.subset(&split.validation),
        &syn.channels,
        None,
    )?;
    println!("trained {} epochs", history.epochs.len());

    let test = syn.corpus.subset(&split.test);
    for (name, model) in [("initial", &before), ("trained", &after)] {
        let mut mean = [0.0; 4];
        for n in test.narratives() {
            let m = extract_fusion_attention(model, n, &syn.channels)?.mean();
            for k in 0..4 {
                mean[k] += m[k] / test.len() as f64;
            }
        }
        let cells: Vec<String> = SLOT_NAMES.iter().zip(mean).map(|(s, w)| format!("{s} {w:.3}")).collect();
        println!("{name:>8}: {}", cells.join("  "));
    }
    Ok(())
}
