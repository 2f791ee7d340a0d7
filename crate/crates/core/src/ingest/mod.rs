//! From raw forum posts to a narrative corpus: fetch, filter, and gate
//! through a story-vs-non-story classifier.

mod classifier;
mod fetch;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{segment_sentences, Corpus, CorpusError, Narrative};
use crate::encoders::{EncoderError, SentenceEncoder};
use crate::neuralcore::NnError;

pub use classifier::{
    classify_story, evaluate_story_classifier, train_story_classifier, BinaryScores, ClassifierConfig,
    ClassifierHistory, StoryClassifier,
};
pub use fetch::{fetch_posts, parse_posts, read_dump, ArchiveClient, PostQuery, PostSource};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("archive {url} unreachable after {attempts} attempts: {last}")]
    Unreachable { url: String, attempts: usize, last: String },
    #[error("training data needs both story and non-story texts")]
    SingleClass,
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("classifier expects {expected} features, encoder `{encoder}` gives {got}")]
    FeatureWidth { encoder: String, expected: usize, got: usize },
    #[error("classifier file: {0}")]
    Format(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, alias = "selftext")]
    pub body: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub over_18: bool,
    #[serde(default)]
    pub subreddit: String,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub created_utc: i64,
}

impl RawPost {
    /// Narrative with the body segmented into sentences; id and title are
    /// kept, subreddit and timestamp go to `meta`.
    pub fn to_narrative(&self) -> Narrative {
        let mut n = Narrative::from_text(self.id.clone(), self.title.clone(), &self.body);
        if !self.subreddit.is_empty() {
            n.meta.insert("subreddit".into(), self.subreddit.clone());
        }
        n.meta.insert("created_utc".into(), self.created_utc.to_string());
        n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_sentences: usize,
    pub banned_tags: BTreeSet<String>,
    /// Minimum story probability δ for a post to enter the corpus.
    pub story_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_sentences: 3,
            banned_tags: ["deleted", "nsfw", "over_18"].into_iter().map(String::from).collect(),
            story_threshold: 0.75,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_sentences == 0 {
            return Err(IngestError::Config("min_sentences must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.story_threshold) {
            return Err(IngestError::Config(format!("story_threshold {} is outside [0, 1]", self.story_threshold)));
        }
        Ok(())
    }

    fn banned(&self, post: &RawPost) -> bool {
        if post.over_18 {
            return true;
        }
        let title = post.title.to_lowercase();
        self.banned_tags.iter().map(|b| b.to_lowercase()).any(|b| {
            post.tags.iter().any(|t| t.to_lowercase().contains(&b)) || title.contains(&format!("[{b}]"))
        })
    }
}

/// Drops banned, adult and too-short posts, keeping input order.
pub fn filter_posts(posts: Vec<RawPost>, config: &FilterConfig) -> Vec<RawPost> {
    posts
        .into_iter()
        .filter(|p| !config.banned(p))
        .filter(|p| {
            let sentences = segment_sentences(&p.body);
            sentences.iter().filter(|s| !s.text.is_empty()).count() >= config.min_sentences
        })
        .collect()
}

/// Keeps posts whose story probability reaches the threshold and converts
/// them to narratives.
pub fn gate_corpus(
    posts: &[RawPost],
    classifier: &StoryClassifier,
    encoder: &dyn SentenceEncoder,
    config: &FilterConfig,
) -> Result<Corpus, IngestError> {
    let mut corpus = Corpus::new();
    for post in posts {
        let p = classify_story(&post.body, classifier, encoder)?;
        if p >= config.story_threshold {
            corpus.push(post.to_narrative(), None)?;
        } else {
            log::debug!("post {} gated out with p = {p:.3}", post.id);
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{ReferenceEncoder, ReferenceMode};
    use proptest::prelude::*;

    fn post(id: &str, body: &str) -> RawPost {
        RawPost {
            id: id.into(),
            title: format!("title {id}"),
            body: body.into(),
            tags: BTreeSet::new(),
            over_18: false,
            subreddit: "tifu".into(),
            created_utc: 0,
        }
    }

    const THREE: &str = "I left. It rained. I came back.";

    #[test]
    fn banned_and_short_posts_are_dropped() {
        let mut nsfw = post("a", THREE);
        nsfw.tags.insert("NSFW".into());
        let mut adult = post("b", THREE);
        adult.over_18 = true;
        let mut deleted = post("c", THREE);
        deleted.title = "[Deleted] by user".into();
        let short = post("d", "I left. It rained.");
        let kept = post("e", THREE);
        let out = filter_posts(vec![nsfw, adult, deleted, short, kept], &FilterConfig::default());
        assert_eq!(out.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), vec!["e"]);
    }

    #[test]
    fn clean_posts_survive_in_order() {
        let posts: Vec<_> = (0..10).map(|i| post(&format!("p{i}"), THREE)).collect();
        assert_eq!(filter_posts(posts.clone(), &FilterConfig::default()), posts);
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig { min_sentences: 0, ..Default::default() }.validate().is_err());
        assert!(FilterConfig { story_threshold: 1.5, ..Default::default() }.validate().is_err());
        assert!(FilterConfig::default().validate().is_ok());
    }

    #[test]
    fn narrative_keeps_title_and_metadata() {
        let n = post("x", THREE).to_narrative();
        assert_eq!((n.id.as_str(), n.title.as_str(), n.len()), ("x", "title x", 3));
        assert_eq!(n.meta["subreddit"], "tifu");
    }

    #[test]
    fn gate_threshold_matches_brute_force() {
        let enc = ReferenceEncoder::new(8, 3, ReferenceMode::SentenceLevel);
        let clf = StoryClassifier::new(8, 5);
        let posts: Vec<_> = (0..30).map(|i| post(&format!("p{i}"), &format!("Story {i} begins. Then {i} ends. Bye."))).collect();
        let probs: Vec<f64> = posts.iter().map(|p| classify_story(&p.body, &clf, &enc).unwrap()).collect();
        let median = {
            let mut s = probs.clone();
            s.sort_by(f64::total_cmp);
            s[15]
        };
        for delta in [0.0, median, 1.0] {
            let config = FilterConfig { story_threshold: delta, ..Default::default() };
            let kept = gate_corpus(&posts, &clf, &enc, &config).unwrap().ids();
            let expected: Vec<&str> =
                posts.iter().zip(&probs).filter(|(_, p)| **p >= delta).map(|(x, _)| x.id.as_str()).collect();
            assert_eq!(kept, expected);
        }
        assert_eq!(gate_corpus(&posts, &clf, &enc, &FilterConfig { story_threshold: 0.0, ..Default::default() }).unwrap().len(), 30);
    }

    proptest! {
        #[test]
        fn filter_is_monotone_in_banned_tags(
            tags in proptest::collection::vec(proptest::sample::select(vec!["nsfw", "deleted", "spoiler", "meta"]), 0..3),
            drop in 0usize..3,
        ) {
            let posts: Vec<_> = ["nsfw", "deleted", "spoiler", "meta", "ok"].iter().enumerate().map(|(i, t)| {
                let mut p = post(&format!("p{i}"), THREE);
                p.tags.insert((*t).to_string());
                p
            }).collect();
            let full = FilterConfig { banned_tags: tags.iter().map(|s| s.to_string()).collect(), ..Default::default() };
            let mut smaller = full.clone();
            if let Some(t) = tags.get(drop) {
                smaller.banned_tags.remove(*t);
            }
            prop_assert!(filter_posts(posts.clone(), &smaller).len() >= filter_posts(posts, &full).len());
        }
    }
}
