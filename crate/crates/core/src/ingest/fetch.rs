use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read};
use std::path::PathBuf;
use std::time::Duration;

use super::{IngestError, RawPost};

/// Posts from one subreddit created in `[after, before)`, epoch seconds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PostQuery {
    /// Empty matches every subreddit.
    pub subreddit: String,
    pub after: Option<i64>,
    pub before: Option<i64>,
}

impl PostQuery {
    pub fn matches(&self, post: &RawPost) -> bool {
        (self.subreddit.is_empty() || post.subreddit.eq_ignore_ascii_case(&self.subreddit))
            && self.after.is_none_or(|a| post.created_utc >= a)
            && self.before.is_none_or(|b| post.created_utc < b)
    }
}

pub enum PostSource {
    Dump(PathBuf),
    Archive(ArchiveClient),
}

/// Client for a paginated archive endpoint,
/// `GET {base}/posts?subreddit=&before=&size=` answering `{"data": [...]}`
/// newest first.
#[derive(Clone, Debug)]
pub struct ArchiveClient {
    pub base_url: String,
    pub page_size: usize,
    pub retries: usize,
    /// Delay before the first retry; doubles on each further one.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl ArchiveClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            page_size: 100,
            retries: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
        }
    }

    fn get_page(&self, http: &reqwest::blocking::Client, url: &str) -> Result<serde_json::Value, IngestError> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt as u32 - 1));
            }
            match http.get(url).send() {
                Ok(resp) if resp.status().is_success() => match resp.json::<serde_json::Value>() {
                    Ok(v) => return Ok(v),
                    Err(e) => last = format!("unreadable body: {e}"),
                },
                Ok(resp) => last = format!("HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
            log::warn!("archive request {url} failed (attempt {}): {last}", attempt + 1);
        }
        Err(IngestError::Unreachable {
            url: url.to_string(),
            attempts: self.retries + 1,
            last,
        })
    }

    /// Walks pages backwards in time until the source runs dry or the
    /// query's lower bound is passed.
    pub fn fetch(&self, query: &PostQuery) -> Result<Vec<RawPost>, IngestError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| IngestError::Unreachable {
                url: self.base_url.clone(),
                attempts: 0,
                last: e.to_string(),
            })?;
        let mut before = query.before;
        let mut posts = Vec::new();
        loop {
            let mut url = format!(
                "{}/posts?subreddit={}&size={}",
                self.base_url, query.subreddit, self.page_size
            );
            if let Some(b) = before {
                url.push_str(&format!("&before={b}"));
            }
            let body = self.get_page(&http, &url)?;
            let records = body.get("data").and_then(|d| d.as_array()).cloned().unwrap_or_default();
            if records.is_empty() {
                break;
            }
            let page = parse_records(records, &url);
            let Some(oldest) = page.iter().map(|p| p.created_utc).min() else {
                break;
            };
            posts.extend(page);
            if before.is_some_and(|b| oldest >= b) || query.after.is_some_and(|a| oldest < a) {
                break;
            }
            before = Some(oldest);
        }
        Ok(dedup(posts.into_iter().filter(|p| query.matches(p))))
    }
}

fn parse_records(records: Vec<serde_json::Value>, origin: &str) -> Vec<RawPost> {
    records
        .into_iter()
        .enumerate()
        .filter_map(|(i, v)| match serde_json::from_value::<RawPost>(v) {
            Ok(p) if !p.id.is_empty() => Some(p),
            Ok(_) => {
                log::warn!("{origin}: record {} has an empty id, skipped", i + 1);
                None
            }
            Err(e) => {
                log::warn!("{origin}: record {} is malformed ({e}), skipped", i + 1);
                None
            }
        })
        .collect()
}

/// First occurrence of each id wins.
fn dedup(posts: impl Iterator<Item = RawPost>) -> Vec<RawPost> {
    let mut seen = BTreeSet::new();
    posts.filter(|p| seen.insert(p.id.clone())).collect()
}

/// One JSON post per line; blank and malformed lines are skipped.
pub fn parse_posts(reader: impl Read) -> Result<Vec<RawPost>, IngestError> {
    let mut values = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => values.push(v),
            Err(e) => log::warn!("dump line {} is not JSON ({e}), skipped", i + 1),
        }
    }
    Ok(parse_records(values, "dump"))
}

pub fn read_dump(path: &std::path::Path) -> Result<Vec<RawPost>, IngestError> {
    parse_posts(std::fs::File::open(path)?)
}

/// Posts matching `query`, deduplicated by id.
pub fn fetch_posts(source: &PostSource, query: &PostQuery) -> Result<Vec<RawPost>, IngestError> {
    match source {
        PostSource::Dump(path) => Ok(dedup(read_dump(path)?.into_iter().filter(|p| query.matches(p)))),
        PostSource::Archive(client) => client.fetch(query),
    }
}
