//! Backend for collecting climax and resolution highlights from several
//! annotators, with live agreement.

mod http;
mod store;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{merge_annotations, AnnotationRecord, Corpus, CorpusError, FieldError};
use crate::eval::{agreement_report, AgreementReport, AnnotatedNarrative, EvalError};

pub use http::{router, serve, SharedService};
pub use store::AnnotationStore;

pub const DEFAULT_QUOTA: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("annotator id must not be empty")]
    EmptyAnnotator,
    #[error("annotation store: {0}")]
    Store(String),
    #[error("annotation quota must be at least 1")]
    Quota,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What an annotator sees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub id: String,
    pub title: String,
    pub sentences: Vec<String>,
}

/// A submission as sent by a client; the server stamps the time when absent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub narrative_id: String,
    pub annotator_id: String,
    #[serde(default)]
    pub climax_indices: std::collections::BTreeSet<usize>,
    #[serde(default)]
    pub resolution_indices: std::collections::BTreeSet<usize>,
    #[serde(default)]
    pub no_climax: bool,
    #[serde(default)]
    pub no_resolution: bool,
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

impl Submission {
    pub fn into_record(self, now: DateTime<Utc>) -> AnnotationRecord {
        AnnotationRecord {
            narrative_id: self.narrative_id,
            annotator_id: self.annotator_id,
            climax_indices: self.climax_indices,
            resolution_indices: self.resolution_indices,
            no_climax: self.no_climax,
            no_resolution: self.no_resolution,
            submitted_at: self.submitted_at.unwrap_or(now),
        }
    }
}

impl From<AnnotationRecord> for Submission {
    fn from(r: AnnotationRecord) -> Self {
        Self {
            narrative_id: r.narrative_id,
            annotator_id: r.annotator_id,
            climax_indices: r.climax_indices,
            resolution_indices: r.resolution_indices,
            no_climax: r.no_climax,
            no_resolution: r.no_resolution,
            submitted_at: Some(r.submitted_at),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted(AnnotationRecord),
    /// Same content as this annotator's latest record; nothing was written.
    Unchanged(AnnotationRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub narratives: usize,
    pub quota: usize,
    /// Narratives that reached the quota.
    pub complete: usize,
    pub annotations: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementSnapshot {
    pub complete_narratives: usize,
    /// Absent until some narrative has at least two annotators at quota.
    pub report: Option<AgreementReport>,
}

pub struct AnnotationService {
    corpus: Corpus,
    positions: HashMap<String, usize>,
    quota: usize,
    store: AnnotationStore,
}

fn same_content(a: &AnnotationRecord, b: &AnnotationRecord) -> bool {
    a.climax_indices == b.climax_indices
        && a.resolution_indices == b.resolution_indices
        && a.no_climax == b.no_climax
        && a.no_resolution == b.no_resolution
}

impl AnnotationService {
    pub fn new(corpus: Corpus, store: AnnotationStore, quota: usize) -> Result<Self, ServiceError> {
        if quota == 0 {
            return Err(ServiceError::Quota);
        }
        let positions = corpus.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(Self {
            corpus,
            positions,
            quota,
            store,
        })
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    pub fn store(&self) -> &AnnotationStore {
        &self.store
    }

    fn sentence_count(&self, id: &str) -> Option<usize> {
        self.positions.get(id).map(|&i| self.corpus.entries()[i].narrative.len())
    }

    /// The least-annotated narrative this annotator has not done yet, in
    /// corpus order among ties; `None` once nothing is left for them.
    pub fn next_task(&self, annotator_id: &str) -> Result<Option<TaskPayload>, ServiceError> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::EmptyAnnotator);
        }
        let pick = self
            .corpus
            .entries()
            .iter()
            .map(|e| (e, self.store.for_narrative(&e.narrative.id)))
            .filter(|(_, recs)| recs.len() < self.quota && recs.iter().all(|r| r.annotator_id != annotator_id))
            .min_by_key(|(_, recs)| recs.len());
        Ok(pick.map(|(e, _)| TaskPayload {
            id: e.narrative.id.clone(),
            title: e.narrative.title.clone(),
            sentences: e.narrative.texts().map(String::from).collect(),
        }))
    }

    /// Validates and stores a record. A narrative already at quota only
    /// accepts revisions from its existing annotators.
    pub fn submit(&mut self, record: AnnotationRecord) -> Result<SubmitOutcome, Vec<FieldError>> {
        let field = |f: &str, m: String| vec![FieldError { field: f.into(), message: m }];
        let Some(len) = self.sentence_count(&record.narrative_id) else {
            return Err(field("narrative_id", format!("unknown narrative `{}`", record.narrative_id)));
        };
        record.validate(len)?;
        let existing = self.store.for_narrative(&record.narrative_id);
        let revising = existing.iter().any(|r| r.annotator_id == record.annotator_id);
        if !revising && existing.len() >= self.quota {
            return Err(field(
                "narrative_id",
                format!("narrative `{}` already has {} annotators", record.narrative_id, self.quota),
            ));
        }
        if let Some(prev) = self.store.latest(&record.narrative_id, &record.annotator_id) {
            if same_content(prev, &record) {
                return Ok(SubmitOutcome::Unchanged(prev.clone()));
            }
        }
        self.store
            .append(record.clone())
            .map_err(|e| field("store", e.to_string()))?;
        Ok(SubmitOutcome::Accepted(record))
    }

    fn complete(&self) -> Vec<AnnotatedNarrative> {
        self.corpus
            .entries()
            .iter()
            .filter_map(|e| {
                let recs = self.store.for_narrative(&e.narrative.id);
                (recs.len() >= self.quota).then(|| AnnotatedNarrative {
                    narrative_id: e.narrative.id.clone(),
                    sentence_count: e.narrative.len(),
                    records: recs.into_iter().cloned().collect(),
                })
            })
            .collect()
    }

    /// Agreement over narratives that reached the quota.
    pub fn agreement_snapshot(&self) -> Result<AgreementSnapshot, ServiceError> {
        let items = self.complete();
        let report = if items.is_empty() || self.quota < 2 {
            None
        } else {
            Some(agreement_report(&items)?)
        };
        Ok(AgreementSnapshot {
            complete_narratives: items.len(),
            report,
        })
    }

    /// Complete narratives with majority-vote gold labels.
    pub fn gold_corpus(&self) -> Result<Corpus, ServiceError> {
        let mut gold = Corpus::new();
        for item in self.complete() {
            let entry = &self.corpus.entries()[self.positions[&item.narrative_id]];
            let labels = merge_annotations(&item.records, item.sentence_count)?;
            gold.push(entry.narrative.clone(), Some(labels))?;
        }
        Ok(gold)
    }

    pub fn progress(&self) -> Progress {
        let mut per_annotator = BTreeMap::new();
        let latest = self.store.latest_records();
        for r in &latest {
            *per_annotator.entry(r.annotator_id.clone()).or_insert(0) += 1;
        }
        Progress {
            narratives: self.corpus.len(),
            quota: self.quota,
            complete: self.complete().len(),
            annotations: latest.len(),
            per_annotator,
        }
    }
}
