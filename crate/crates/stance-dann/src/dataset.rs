//! The normalized dataset: one JSON object per line with `id`, `domain`,
//! `label` (`null` when unlabeled), `claim` and `document`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use stance_dann_core::data::{DomainTag, LabeledPair, StanceLabel};

use crate::ingest::open;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub domain: DomainTag,
    pub label: Option<StanceLabel>,
    pub claim: String,
    pub document: String,
}

impl From<LabeledPair> for Record {
    fn from(p: LabeledPair) -> Self {
        Record {
            id: p.id,
            domain: p.domain,
            label: Some(p.label),
            claim: p.claim,
            document: p.document,
        }
    }
}

#[derive(Serialize)]
struct Line<'a> {
    id: &'a str,
    domain: &'a str,
    label: Option<&'a str>,
    claim: &'a str,
    document: &'a str,
}

#[derive(Deserialize)]
struct OwnedLine {
    id: String,
    domain: String,
    label: Option<String>,
    claim: String,
    document: String,
}

pub fn write_dataset(path: &Path, records: &[Record]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = Line {
            id: &r.id,
            domain: r.domain.as_str(),
            label: r.label.map(StanceLabel::as_str),
            claim: &r.claim,
            document: &r.document,
        };
        let text = serde_json::to_string(&line).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(out, "{text}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Record>> {
    let reader = BufReader::new(open(path)?);
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n as u64 + 1;
        let text = line.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::parse(path, line_no, m);
        let raw: OwnedLine = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let domain = raw
            .domain
            .parse()
            .map_err(|_| bad(format!("unknown domain `{}`", raw.domain)))?;
        let label = match raw.label.as_deref() {
            None => None,
            Some(l) => Some(l.parse().map_err(|_| bad(format!("unknown label `{l}`")))?),
        };
        if raw.claim.trim().is_empty() || raw.document.trim().is_empty() {
            return Err(bad("empty claim or document".into()));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(bad(format!("duplicate id `{}`", raw.id)));
        }
        records.push(Record {
            id: raw.id,
            domain,
            label,
            claim: raw.claim,
            document: raw.document,
        });
    }
    Ok(records)
}

/// The records as labeled pairs; fails if any label is missing.
pub fn require_labels(path: &Path, records: Vec<Record>) -> Result<Vec<LabeledPair>> {
    let missing = records.iter().filter(|r| r.label.is_none()).count();
    if missing > 0 {
        return Err(Error::LabelsRequired {
            path: path.to_path_buf(),
            missing,
        });
    }
    Ok(records
        .into_iter()
        .map(|r| {
            let label = r.label.expect("checked above");
            LabeledPair::new(r.id, r.claim, r.document, label, r.domain)
        })
        .collect())
}
