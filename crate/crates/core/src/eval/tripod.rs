//! Turning-point evaluation on movie synopses: climax predictions are scored
//! against TP4 and resolution predictions against TP5.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::set_distance;
use super::report::System;
use super::EvalError;
use crate::corpus::{Label, Narrative};
use crate::encoders::DEFAULT_ENTITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synopsis {
    #[serde(default)]
    pub id: String,
    pub sentences: Vec<String>,
    pub tp4: BTreeSet<usize>,
    pub tp5: BTreeSet<usize>,
    /// Ranked cast; the first entry is taken as the protagonist.
    #[serde(default)]
    pub cast: Option<Vec<String>>,
}

impl Synopsis {
    pub fn protagonist(&self) -> &str {
        match self.cast.as_ref().and_then(|c| c.first()) {
            Some(name) if !name.trim().is_empty() => name,
            _ => {
                log::warn!("synopsis `{}` has no cast list; using `{DEFAULT_ENTITY}`", self.id);
                DEFAULT_ENTITY
            }
        }
    }
}

pub fn read_synopses(reader: impl Read) -> Result<Vec<Synopsis>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut s: Synopsis =
            serde_json::from_str(&line).map_err(|e| EvalError::Input(format!("line {}: {e}", n + 1)))?;
        if s.id.is_empty() {
            s.id = format!("synopsis-{}", n + 1);
        }
        if s.sentences.is_empty() {
            return Err(EvalError::Input(format!("line {}: synopsis has no sentences", n + 1)));
        }
        if let Some(i) = s.tp4.iter().chain(&s.tp5).find(|&&i| i >= s.sentences.len()) {
            return Err(EvalError::Input(format!("line {}: turning point {i} out of range", n + 1)));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_synopses(path: &Path) -> Result<Vec<Synopsis>, EvalError> {
    read_synopses(std::fs::File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningPointReport {
    pub system: String,
    pub synopses: usize,
    /// Mean distance (percent) between predicted climax and TP4.
    pub tp4_distance: f64,
    /// Mean distance (percent) between predicted resolution and TP5.
    pub tp5_distance: f64,
    pub per_synopsis: Vec<(String, f64, f64)>,
}

pub fn evaluate_turning_points(
    system: &dyn System,
    synopses: &[Synopsis],
    seed: u64,
) -> Result<TurningPointReport, EvalError> {
    if synopses.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per = Vec::with_capacity(synopses.len());
    for s in synopses {
        let narrative = Narrative::new(s.id.clone(), "", s.sentences.iter().cloned())?;
        let pred = system
            .predict(&narrative, s.protagonist(), seed)
            .map_err(|e| EvalError::System {
                narrative_id: s.id.clone(),
                message: e.to_string(),
            })?;
        let len = s.sentences.len();
        let d4 = 100.0 * set_distance(&pred.indices_of(Label::Climax), &s.tp4, len);
        let d5 = 100.0 * set_distance(&pred.indices_of(Label::Resolution), &s.tp5, len);
        per.push((s.id.clone(), d4, d5));
    }
    let n = per.len() as f64;
    Ok(TurningPointReport {
        system: system.name(),
        synopses: per.len(),
        tp4_distance: per.iter().map(|p| p.1).sum::<f64>() / n,
        tp5_distance: per.iter().map(|p| p.2).sum::<f64>() / n,
        per_synopsis: per,
    })
}
