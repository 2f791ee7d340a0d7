use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;

use super::{Corpus, CorpusError, Label, LabelSequence, Narrative, Sentence};

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl CorpusRecord {
    pub fn from_entry(narrative: &Narrative, labels: Option<&LabelSequence>) -> Self {
        Self {
            id: narrative.id.clone(),
            title: narrative.title.clone(),
            sentences: narrative.sentences.iter().map(|s| s.text.clone()).collect(),
            labels: labels.map(|l| l.labels.clone()),
            meta: narrative.meta.clone(),
        }
    }

    pub fn into_entry(self) -> Result<(Narrative, Option<LabelSequence>), CorpusError> {
        if self.sentences.is_empty() {
            return Err(CorpusError::EmptyNarrative(self.id));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.sentences.len() {
                return Err(CorpusError::LabelLength {
                    id: self.id,
                    expected: self.sentences.len(),
                    got: l.len(),
                });
            }
        }
        let labels = self.labels.map(|l| LabelSequence::new(self.id.clone(), l));
        let narrative = Narrative {
            sentences: self
                .sentences
                .into_iter()
                .enumerate()
                .map(|(i, s)| Sentence::new(i, s))
                .collect(),
            id: self.id,
            title: self.title,
            meta: self.meta,
        };
        Ok((narrative, labels))
    }
}

pub fn read_corpus(reader: impl Read) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        let (narrative, labels) = record.into_entry()?;
        corpus.push(narrative, labels)?;
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    read_corpus(std::fs::File::open(path)?)
}

pub fn write_corpus(corpus: &Corpus, writer: impl Write) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(writer);
    for e in corpus.entries() {
        let rec = CorpusRecord::from_entry(&e.narrative, e.labels.as_ref());
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf)?;
    write_atomic(path, &buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize) -> Corpus {
        let mut c = Corpus::new();
        for i in 0..n {
            let len = 3 + i % 5;
            let mut narrative =
                Narrative::new(format!("n{i}"), format!("Title {i}"), (0..len).map(|j| format!("Sentence {j} of \"{i}\"."))).unwrap();
            narrative.meta.insert("subreddit".into(), "tifu".into());
            let labels = (i % 2 == 0).then(|| {
                let mut l = LabelSequence::all_none(format!("n{i}"), len);
                l.labels[1] = Label::Climax;
                l.labels[len - 1] = Label::Resolution;
                l
            });
            c.push(narrative, labels).unwrap();
        }
        c
    }

    #[test]
    fn two_records_load_in_order() {
        let text = concat!(
            r#"{"id":"a","title":"A","sentences":["I ran.","I fell."]}"#,
            "\n",
            r#"{"id":"b","title":"B","sentences":["x"],"labels":["climax"]}"#,
            "\n"
        );
        let c = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.ids(), vec!["a", "b"]);
        assert!(c.get("a").unwrap().labels.is_none());
        assert_eq!(c.get("b").unwrap().labels.as_ref().unwrap().labels, vec![Label::Climax]);
    }

    #[test]
    fn short_label_list_names_the_narrative() {
        let text = r#"{"id":"story-9","title":"","sentences":["a","b","c"],"labels":["none","climax"]}"#;
        let err = read_corpus(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::LabelLength { ref id, expected: 3, got: 2 } if id == "story-9"));
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"id\":\"a\",\"sentences\":[\"x\"]}\n{not json\n";
        match read_corpus(text.as_bytes()).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_corpus_writes_empty_file() {
        let mut buf = Vec::new();
        write_corpus(&Corpus::new(), &mut buf).unwrap();
        assert!(buf.is_empty());
        let mut buf = Vec::new();
        write_corpus(&sample(1), &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 1);
    }

    #[test]
    fn fifty_narratives_round_trip_and_save_is_byte_stable() {
        let c = sample(50);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&c, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = load_corpus(&path).unwrap();
        assert_eq!(back, c);
        save_corpus(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(
            texts in proptest::collection::vec(proptest::collection::vec("[ -~]{0,30}", 1..6), 0..6),
            seed in 0usize..3,
        ) {
            let mut c = Corpus::new();
            for (i, sents) in texts.iter().enumerate() {
                let n = Narrative::new(format!("id{i}"), format!("t{seed}"), sents.clone()).unwrap();
                let labels = (i % 2 == seed % 2).then(|| LabelSequence::new(
                    format!("id{i}"),
                    (0..sents.len()).map(|j| Label::from_index((j + seed) % 3).unwrap()).collect(),
                ));
                c.push(n, labels).unwrap();
            }
            let mut buf = Vec::new();
            write_corpus(&c, &mut buf).unwrap();
            prop_assert_eq!(read_corpus(buf.as_slice()).unwrap(), c);
        }
    }
}
