use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChannelSource, ChannelTriple, EncoderError, EncoderSet};
use crate::corpus::Narrative;
use crate::fsutil::write_atomic;

/// Environment variable naming the embedding cache directory.
pub const CACHE_ENV: &str = "NARRATIVE_ARC_CACHE";

/// Identifies one sidecar file: embeddings from the same adapter, width and
/// seed share a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheKey {
    pub adapter: String,
    pub width: usize,
    pub seed: u64,
}

impl CacheKey {
    pub fn file_name(&self) -> String {
        let adapter: String = self
            .adapter
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect();
        format!("{adapter}-w{}-s{}.jsonl", self.width, self.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    id: String,
    fingerprint: String,
    channels: ChannelTriple,
}

/// Channel triples persisted per narrative id. Entries are keyed by a hash of
/// the sentence texts and entity, so edited narratives miss the cache.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    entries: BTreeMap<String, (String, ChannelTriple)>,
    dirty: bool,
}

impl EmbeddingCache {
    pub fn open(dir: &Path, key: &CacheKey) -> Result<Self, EncoderError> {
        let path = dir.join(key.file_name());
        let mut entries = BTreeMap::new();
        if path.exists() {
            let reader = std::io::BufReader::new(std::fs::File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheLine = serde_json::from_str(&line)
                    .map_err(|e| EncoderError::Cache(format!("{}:{}: {e}", path.display(), n + 1)))?;
                entries.insert(rec.id, (rec.fingerprint, rec.channels));
            }
        }
        Ok(Self {
            path,
            entries,
            dirty: false,
        })
    }

    /// Opens the cache under `$NARRATIVE_ARC_CACHE`, if that is set.
    pub fn from_env(key: &CacheKey) -> Result<Option<Self>, EncoderError> {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => {
                let dir = PathBuf::from(dir);
                std::fs::create_dir_all(&dir)?;
                Self::open(&dir, key).map(Some)
            }
            _ => Ok(None),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, narrative: &Narrative, entity: &str) -> Option<&ChannelTriple> {
        let (fp, channels) = self.entries.get(&narrative.id)?;
        (*fp == fingerprint(narrative, entity)).then_some(channels)
    }

    pub fn insert(&mut self, narrative: &Narrative, entity: &str, channels: ChannelTriple) {
        self.entries
            .insert(narrative.id.clone(), (fingerprint(narrative, entity), channels));
        self.dirty = true;
    }

    pub fn save(&mut self) -> Result<(), EncoderError> {
        if !self.dirty {
            return Ok(());
        }
        let mut buf = Vec::new();
        for (id, (fp, channels)) in &self.entries {
            let line = CacheLine {
                id: id.clone(),
                fingerprint: fp.clone(),
                channels: channels.clone(),
            };
            serde_json::to_writer(&mut buf, &line).map_err(|e| EncoderError::Cache(e.to_string()))?;
            buf.push(b'\n');
        }
        write_atomic(&self.path, &buf)?;
        self.dirty = false;
        Ok(())
    }
}

fn fingerprint(narrative: &Narrative, entity: &str) -> String {
    let mut h = Sha256::new();
    h.update(entity.as_bytes());
    for s in narrative.texts() {
        h.update([0u8]);
        h.update(s.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// An [`EncoderSet`] that consults and fills an [`EmbeddingCache`].
#[derive(Debug)]
pub struct CachedChannels {
    inner: EncoderSet,
    cache: Mutex<EmbeddingCache>,
}

impl CachedChannels {
    pub fn new(inner: EncoderSet, cache: EmbeddingCache) -> Self {
        Self {
            inner,
            cache: Mutex::new(cache),
        }
    }

    pub fn flush(&self) -> Result<(), EncoderError> {
        self.cache.lock().expect("cache lock").save()
    }
}

impl ChannelSource for CachedChannels {
    fn channels(&self, narrative: &Narrative) -> Result<ChannelTriple, EncoderError> {
        let entity = self.inner.entity_for(narrative);
        if let Some(c) = self.cache.lock().expect("cache lock").get(narrative, entity) {
            return Ok(c.clone());
        }
        let c = self.inner.encode_channels(narrative, Some(entity))?;
        self.cache.lock().expect("cache lock").insert(narrative, entity, c.clone());
        Ok(c)
    }

    fn width(&self) -> usize {
        self.inner.width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trips_exactly_and_misses_on_edits() {
        let dir = tempfile::tempdir().unwrap();
        let key = CacheKey {
            adapter: "xsem.reference+mental.reference".into(),
            width: 8,
            seed: 3,
        };
        assert_eq!(key.file_name(), "xsem.reference_mental.reference-w8-s3.jsonl");
        let enc = EncoderSet::reference(8, 3);
        let n = Narrative::new("a", "", ["I tripped.", "I got up."]).unwrap();
        let fresh = enc.encode_channels(&n, None).unwrap();

        let cached = CachedChannels::new(enc.clone(), EmbeddingCache::open(dir.path(), &key).unwrap());
        assert_eq!(cached.channels(&n).unwrap(), fresh);
        cached.flush().unwrap();

        let reopened = EmbeddingCache::open(dir.path(), &key).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get(&n, "I").unwrap(), &fresh);
        assert!(reopened.get(&n.with_sentence(1, "I stayed down."), "I").is_none());
        assert!(reopened.get(&n, "she").is_none());
    }
}
