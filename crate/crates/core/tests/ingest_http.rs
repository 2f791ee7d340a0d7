use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use narrative_arc::ingest::{fetch_posts, ArchiveClient, IngestError, PostQuery, PostSource};

#[derive(Deserialize)]
struct PageQuery {
    subreddit: String,
    size: usize,
    before: Option<i64>,
}

struct Archive {
    /// (id, created_utc), newest first.
    posts: Vec<(String, i64)>,
    /// Requests answered with 503 before the archive starts serving.
    failures: usize,
    hits: AtomicUsize,
}

async fn page(State(archive): State<Arc<Archive>>, Query(q): Query<PageQuery>) -> Response {
    let hit = archive.hits.fetch_add(1, Ordering::SeqCst);
    if hit < archive.failures {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    let data: Vec<_> = archive
        .posts
        .iter()
        .filter(|(_, t)| q.before.is_none_or(|b| *t < b))
        .take(q.size)
        .map(|(id, t)| {
            json!({
                "id": id,
                "title": format!("post {id}"),
                "selftext": "I woke up. I left. I came back.",
                "subreddit": q.subreddit,
                "created_utc": t,
                "over_18": false,
            })
        })
        .collect();
    Json(json!({ "data": data })).into_response()
}

/// Serves `archive` on an ephemeral port from a background thread.
fn spawn(archive: Arc<Archive>) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/posts", get(page)).with_state(archive);
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn archive(n: usize, failures: usize) -> Arc<Archive> {
    Arc::new(Archive {
        posts: (0..n).map(|i| (format!("p{i:02}"), 1_000_000 - i as i64 * 10)).collect(),
        failures,
        hits: AtomicUsize::new(0),
    })
}

fn client(addr: SocketAddr) -> ArchiveClient {
    ArchiveClient {
        page_size: 10,
        backoff: Duration::from_millis(10),
        ..ArchiveClient::new(format!("http://{addr}"))
    }
}

fn query() -> PostQuery {
    PostQuery {
        subreddit: "stories".into(),
        after: None,
        before: None,
    }
}

#[test]
fn walks_three_pages() {
    let server = archive(30, 0);
    let addr = spawn(server.clone());
    let posts = fetch_posts(&PostSource::Archive(client(addr)), &query()).unwrap();
    assert_eq!(posts.len(), 30);
    let ids: std::collections::BTreeSet<_> = posts.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids.len(), 30);
    assert!(posts.iter().all(|p| p.subreddit == "stories"));
    assert!(posts.windows(2).all(|w| w[0].created_utc > w[1].created_utc));
    // three full pages plus the empty one that ends the walk
    assert_eq!(server.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn respects_time_range() {
    let addr = spawn(archive(30, 0));
    let q = PostQuery {
        after: Some(1_000_000 - 145),
        before: Some(1_000_000 - 45),
        ..query()
    };
    let posts = fetch_posts(&PostSource::Archive(client(addr)), &q).unwrap();
    let ids: Vec<_> = posts.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, (5..15).map(|i| format!("p{i:02}")).collect::<Vec<_>>());
}

#[test]
fn retries_transient_failures() {
    let server = archive(5, 2);
    let addr = spawn(server.clone());
    let posts = fetch_posts(&PostSource::Archive(client(addr)), &query()).unwrap();
    assert_eq!(posts.len(), 5);
    assert!(server.hits.load(Ordering::SeqCst) >= 3);
}

#[test]
fn gives_up_after_retries() {
    let addr = spawn(archive(5, usize::MAX));
    let err = fetch_posts(&PostSource::Archive(client(addr)), &query()).unwrap_err();
    match err {
        IngestError::Unreachable { attempts, .. } => assert_eq!(attempts, 4),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn unreachable_host() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = fetch_posts(&PostSource::Archive(client(addr)), &query()).unwrap_err();
    assert!(matches!(err, IngestError::Unreachable { .. }), "{err}");
}
