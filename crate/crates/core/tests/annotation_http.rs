use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use narrative_arc::annotation::{router, AnnotationService, AnnotationStore, TaskPayload};
use narrative_arc::corpus::{Corpus, Narrative};
use narrative_arc::eval::fleiss_kappa;

fn corpus() -> Corpus {
    let mut c = Corpus::new();
    for i in 0..3 {
        let n = Narrative::from_text(
            format!("n{i}"),
            format!("story {i}"),
            "I packed my bag. The train was late. I missed the interview. They called me back anyway.",
        );
        c.push(n, None).unwrap();
    }
    c
}

fn spawn(service: AnnotationService) -> String {
    let state = Arc::new(Mutex::new(service));
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn record(narrative: &str, annotator: &str, climax: &[usize], resolution: &[usize]) -> Value {
    json!({
        "narrative_id": narrative,
        "annotator_id": annotator,
        "climax_indices": climax,
        "resolution_indices": resolution,
        "no_climax": climax.is_empty(),
        "no_resolution": resolution.is_empty(),
    })
}

fn next(http: &Client, base: &str, annotator: &str) -> Option<TaskPayload> {
    let resp = http
        .get(format!("{base}/api/tasks/next?annotator_id={annotator}"))
        .send()
        .unwrap();
    match resp.status() {
        StatusCode::OK => Some(resp.json().unwrap()),
        StatusCode::NO_CONTENT => None,
        s => panic!("unexpected status {s}"),
    }
}

#[test]
fn scripted_sessions_reach_full_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let base = spawn(AnnotationService::new(corpus(), AnnotationStore::open(&path).unwrap(), 3).unwrap());
    let http = Client::new();

    for annotator in ["ann-a", "ann-b", "ann-c"] {
        let mut seen = Vec::new();
        while let Some(task) = next(&http, &base, annotator) {
            assert_eq!(task.sentences.len(), 4);
            assert!(!seen.contains(&task.id), "task {} served twice", task.id);
            let resp = http
                .post(format!("{base}/api/annotations"))
                .json(&record(&task.id, annotator, &[2], &[3]))
                .send()
                .unwrap();
            assert_eq!(resp.status(), StatusCode::CREATED);
            seen.push(task.id);
        }
        assert_eq!(seen.len(), 3);
    }

    let agreement: Value = http.get(format!("{base}/api/agreement")).send().unwrap().json().unwrap();
    assert_eq!(agreement["complete_narratives"], 3);
    let report = &agreement["report"];
    assert_eq!(report["kappa"], 1.0, "{report}");
    for class in ["climax", "resolution"] {
        assert_eq!(report[class]["percentage_agreement"], 1.0);
        assert_eq!(report[class]["distance"], 0.0);
    }

    let progress: Value = http.get(format!("{base}/api/progress")).send().unwrap().json().unwrap();
    assert_eq!(progress["complete"], 3);
    assert_eq!(progress["annotations"], 9);

    let records: Vec<Value> = http
        .get(format!("{base}/api/annotations?narrative_id=n1"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(records.len(), 3);

    // the store file holds one record per line with the same shape
    let lines: Vec<Value> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().all(|l| l["submitted_at"].is_string() && l["climax_indices"] == json!([2])));
}

#[test]
fn disagreement_matches_hand_computed_kappa() {
    let base = spawn(AnnotationService::new(corpus(), AnnotationStore::in_memory(), 3).unwrap());
    let http = Client::new();
    // n0 sentence categories per annotator (None, Climax, Resolution):
    let plans: [(&str, &[usize], &[usize]); 3] = [("x", &[2], &[3]), ("y", &[1, 2], &[3]), ("z", &[2], &[])];
    for (annotator, climax, resolution) in plans {
        let resp = http
            .post(format!("{base}/api/annotations"))
            .json(&record("n0", annotator, climax, resolution))
            .send()
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
    }
    // per-sentence counts over (none, climax, resolution), filled in by hand
    let table = vec![vec![3, 0, 0], vec![2, 1, 0], vec![0, 3, 0], vec![1, 0, 2]];
    let expected = fleiss_kappa(&table).unwrap();
    // worked out by hand: P̄ = 2/3, P̄e = 7/18, so kappa = 5/11
    assert!((expected - 5.0 / 11.0).abs() < 1e-12);

    let agreement: Value = http.get(format!("{base}/api/agreement")).send().unwrap().json().unwrap();
    assert_eq!(agreement["complete_narratives"], 1);
    let kappa = agreement["report"]["kappa"].as_f64().unwrap();
    assert!((kappa - expected).abs() < 1e-12, "{kappa} vs {expected}");
}

#[test]
fn status_codes() {
    let base = spawn(AnnotationService::new(corpus(), AnnotationStore::in_memory(), 1).unwrap());
    let http = Client::new();
    let post = |body: Value| http.post(format!("{base}/api/annotations")).json(&body).send().unwrap();

    let resp = http.get(format!("{base}/api/tasks/next?annotator_id=")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let mut bad = record("n0", "a", &[1], &[]);
    bad["no_climax"] = json!(true);
    let resp = post(bad);
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["errors"][0]["field"], "climax_indices");

    let resp = post(record("n0", "a", &[9], &[]));
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let resp = post(record("missing", "a", &[1], &[]));
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(post(record("n0", "a", &[1], &[2])).status(), StatusCode::CREATED);
    // resending the same highlights changes nothing
    assert_eq!(post(record("n0", "a", &[1], &[2])).status(), StatusCode::OK);
    // a revision from the same annotator is accepted, a new annotator is over quota
    assert_eq!(post(record("n0", "a", &[1], &[3])).status(), StatusCode::CREATED);
    assert_eq!(post(record("n0", "b", &[1], &[3])).status(), StatusCode::UNPROCESSABLE_ENTITY);

    let snapshot: Value = http.get(format!("{base}/api/agreement")).send().unwrap().json().unwrap();
    assert_eq!(snapshot["report"], Value::Null);

    for id in ["n1", "n2"] {
        assert_eq!(next(&http, &base, "a").unwrap().id, id);
        assert_eq!(post(record(id, "a", &[0], &[])).status(), StatusCode::CREATED);
    }
    assert!(next(&http, &base, "a").is_none());
    assert!(next(&http, &base, "b").is_none());
}
