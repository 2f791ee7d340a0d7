//! Trains M-SENSE on the planted-signal synthetic corpus and reports
//! held-out scores.
use std::time::Instant;

use narrative_arc::corpus::split_corpus;
use narrative_arc::eval::evaluate_predictions;
use narrative_arc::msense::{predict_channels, train, MSenseConfig, MSenseModel};
use narrative_arc::synthetic::{synthetic_corpus, SyntheticConfig};
use narrative_arc::encoders::ChannelSource;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let d: usize = args.get(1).map_or(Ok(96), |s| s.parse())?;
    let epochs: usize = args.get(2).map_or(Ok(300), |s| s.parse())?;
    let syn = synthetic_corpus(&SyntheticConfig { width: d, ..Default::default() })?;
    let split = split_corpus(&syn.corpus, [0.7, 0.1, 0.2], 0)?;
    let (train_set, val_set, test_set) = (
        syn.corpus.subset(&split.train),
        syn.corpus.subset(&split.validation),
        syn.corpus.subset(&split.test),
    );
    let config = MSenseConfig {
        d,
        max_epochs: epochs,
        ..Default::default()
    };
    let start = Instant::now();
    let (model, history) = train(MSenseModel::new(config)?, &train_set, &val_set, &syn.channels, None)?;
    println!(
        "trained {} epochs (best {}) in {:.1}s",
        history.epochs.len(),
        history.best_epoch,
        start.elapsed().as_secs_f64()
    );
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for (n, l) in test_set.labelled()? {
        preds.push(predict_channels(&model, &n.id, &syn.channels.channels(n)?)?.label_sequence());
        golds.push(l.clone());
    }
    let report = evaluate_predictions("m-sense", &preds, &golds, &serde_json::json!({}))?;
    for (name, class) in [("climax", &report.climax), ("resolution", &report.resolution)] {
        println!("{name:>10}: F1 {:.3}  D {:.2}%", class.f1.mean, class.distance.mean);
    }
    Ok(())
}
