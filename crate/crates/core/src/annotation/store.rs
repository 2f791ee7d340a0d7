use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::corpus::AnnotationRecord;

use super::ServiceError;

/// Append-only annotation log with a latest-record index per
/// `(narrative_id, annotator_id)`.
#[derive(Debug, Default)]
pub struct AnnotationStore {
    path: Option<PathBuf>,
    log: Vec<AnnotationRecord>,
    index: BTreeMap<(String, String), usize>,
}

impl AnnotationStore {
    /// A store that only lives in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a JSONL log and replays it.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let mut store = Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: AnnotationRecord = serde_json::from_str(&line)
                    .map_err(|e| ServiceError::Store(format!("{} line {}: {e}", path.display(), i + 1)))?;
                store.index_record(record);
            }
        }
        Ok(store)
    }

    fn index_record(&mut self, record: AnnotationRecord) {
        let key = (record.narrative_id.clone(), record.annotator_id.clone());
        self.log.push(record);
        self.index.insert(key, self.log.len() - 1);
    }

    /// Writes the record to the log file (if any) before indexing it.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<(), ServiceError> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_vec(&record).map_err(|e| ServiceError::Store(e.to_string()))?;
            line.push(b'\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.index_record(record);
        Ok(())
    }

    pub fn log(&self) -> &[AnnotationRecord] {
        &self.log
    }

    pub fn latest(&self, narrative_id: &str, annotator_id: &str) -> Option<&AnnotationRecord> {
        self.index
            .get(&(narrative_id.to_string(), annotator_id.to_string()))
            .map(|&i| &self.log[i])
    }

    /// Latest record of every annotator for one narrative, by annotator id.
    pub fn for_narrative(&self, narrative_id: &str) -> Vec<&AnnotationRecord> {
        self.index
            .range((narrative_id.to_string(), String::new())..)
            .take_while(|((n, _), _)| n == narrative_id)
            .map(|(_, &i)| &self.log[i])
            .collect()
    }

    /// Every latest record, ordered by narrative then annotator.
    pub fn latest_records(&self) -> Vec<&AnnotationRecord> {
        self.index.values().map(|&i| &self.log[i]).collect()
    }
}
