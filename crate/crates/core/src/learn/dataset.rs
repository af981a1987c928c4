use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Transition;
use crate::neural::ModelKind;
use crate::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Transitions of a single kind (all gap actions or all manoeuvres).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        let ds = Self { transitions };
        if let Some(first) = ds.transitions.first() {
            if let Some(i) = ds.transitions.iter().position(|t| t.is_gap() != first.is_gap()) {
                return Err(Error::InvalidArgument(format!(
                    "transition {i} has a different action kind than transition 0"
                )));
            }
        }
        Ok(ds)
    }

    pub fn kind(&self) -> Option<ModelKind> {
        self.transitions.first().map(|t| {
            if t.is_gap() {
                ModelKind::Options
            } else {
                ModelKind::HighLevel
            }
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Parses and validates one JSON-lines record.
pub fn parse_transition(line: &str) -> Result<Transition> {
    let t: Transition = serde_json::from_str(line)?;
    t.validate()?;
    Ok(t)
}

/// Reads a JSON-lines dataset; blank lines are skipped.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut transitions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = parse_transition(&line).map_err(|e| Error::Record {
            path: shown.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if let Some(first) = transitions.first() {
            let first: &Transition = first;
            if first.is_gap() != t.is_gap() {
                return Err(Error::Record {
                    path: shown,
                    line: i + 1,
                    msg: "action kind differs from the first record".into(),
                });
            }
        }
        transitions.push(t);
    }
    Ok(Dataset { transitions })
}

pub fn write_dataset<'a, I>(path: &Path, transitions: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Transition>,
{
    let mut w = BufWriter::new(File::create(path)?);
    for t in transitions {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
