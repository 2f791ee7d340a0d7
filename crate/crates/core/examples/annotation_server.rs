//! Runs the annotation service on a synthetic corpus.
//!
//! `cargo run --example annotation_server` plays three scripted annotators
//! against the service and prints the resulting agreement.
//! `cargo run --example annotation_server -- serve 127.0.0.1:8080` serves the
//! HTTP API instead, storing annotations in `annotations.jsonl`.
use std::sync::{Arc, Mutex};

use narrative_arc::annotation::{serve, AnnotationService, AnnotationStore, DEFAULT_QUOTA};
use narrative_arc::corpus::{AnnotationRecord, Label};
use narrative_arc::synthetic::{synthetic_text_corpus, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let corpus = synthetic_text_corpus(&SyntheticConfig {
        narratives: 12,
        ..Default::default()
    });
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some("serve") {
        let addr = args.get(1).map_or("127.0.0.1:8080", String::as_str).parse()?;
        let store = AnnotationStore::open(std::path::Path::new("annotations.jsonl"))?;
        let service = AnnotationService::new(corpus, store, DEFAULT_QUOTA)?;
        println!("listening on http://{addr}");
        tokio::runtime::Runtime::new()?.block_on(serve(Arc::new(Mutex::new(service)), addr))?;
        return Ok(());
    }

    let truth = corpus.clone();
    let mut service = AnnotationService::new(corpus, AnnotationStore::in_memory(), DEFAULT_QUOTA)?;
    for (k, annotator) in ["ana", "ben", "cho"].into_iter().enumerate() {
        while let Some(task) = service.next_task(annotator)? {
            let gold = truth.get(&task.id).and_then(|e| e.labels.as_ref()).expect("synthetic stories are labelled");
            let mut climax: Vec<usize> = gold.indices_of(Label::Climax).into_iter().collect();
            // the third annotator marks one sentence early on every other story
            if k == 2 && task.id.ends_with(['0', '2', '4', '6', '8']) && climax[0] > 0 {
                climax[0] -= 1;
            }
            let record = AnnotationRecord::new(task.id, annotator, climax, gold.indices_of(Label::Resolution));
            service.submit(record).map_err(|errs| format!("{errs:?}"))?;
        }
    }
    println!("{}", serde_json::to_string_pretty(&service.progress())?);
    println!("{}", serde_json::to_string_pretty(&service.agreement_snapshot()?)?);
    Ok(())
}
