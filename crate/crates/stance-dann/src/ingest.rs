//! FNC and FEVER loaders.
//!
//! FNC ships two CSV files: stances with header `Headline,Body ID,Stance`
//! and bodies with header `Body ID,articleBody`. Every stance row becomes a
//! target-domain pair whose document is the joined body.
//!
//! The FEVER source file is line-delimited JSON with string fields `claim`,
//! `document` (already resolved evidence text, may be absent on
//! `NOT ENOUGH INFO` rows) and `label`. `SUPPORTS` maps
//! to agree, `REFUTES` to disagree and `NOT ENOUGH INFO` rows are dropped.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use stance_dann_core::data::{DomainTag, LabeledPair, StanceLabel};

use crate::{Error, Result};

pub const FNC_STANCES_HEADER: [&str; 3] = ["Headline", "Body ID", "Stance"];
pub const FNC_BODIES_HEADER: [&str; 2] = ["Body ID", "articleBody"];

pub const FEVER_SUPPORTS: &str = "SUPPORTS";
pub const FEVER_REFUTES: &str = "REFUTES";
pub const FEVER_NEI: &str = "NOT ENOUGH INFO";

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("malformed CSV: {kind:?}")),
    }
}

fn csv_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(open(path)?);
    let found = reader.headers().map_err(|e| csv_error(path, e))?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(reader)
}

fn non_empty(path: &Path, line: u64, what: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::parse(path, line, format!("empty {what}")));
    }
    Ok(())
}

/// Body ID to article text.
pub fn load_fnc_bodies(path: &Path) -> Result<HashMap<String, String>> {
    let mut reader = csv_reader(path, &FNC_BODIES_HEADER)?;
    let mut bodies = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, csv::Position::line);
        let id = record[0].trim().to_string();
        non_empty(path, line, "articleBody", &record[1])?;
        if bodies.insert(id.clone(), record[1].to_string()).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate body id `{id}`"),
            ));
        }
    }
    Ok(bodies)
}

/// One target-domain pair per stance row, in file order. Ids are
/// `fnc-<row>` with rows counted from 1.
pub fn load_fnc(stances_path: &Path, bodies_path: &Path) -> Result<Vec<LabeledPair>> {
    let bodies = load_fnc_bodies(bodies_path)?;
    let mut reader = csv_reader(stances_path, &FNC_STANCES_HEADER)?;
    let mut pairs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(stances_path, e))?;
        let line = record.position().map_or(0, csv::Position::line);
        let headline = &record[0];
        non_empty(stances_path, line, "headline", headline)?;
        let body_id = record[1].trim();
        let body = bodies.get(body_id).ok_or_else(|| Error::UnknownBodyId {
            path: stances_path.to_path_buf(),
            line,
            body_id: body_id.to_string(),
        })?;
        let label: StanceLabel = record[2].parse().map_err(|_| Error::UnknownStance {
            path: stances_path.to_path_buf(),
            line,
            value: record[2].to_string(),
        })?;
        pairs.push(LabeledPair::new(
            format!("fnc-{}", row + 1),
            headline,
            body.as_str(),
            label,
            DomainTag::Target,
        ));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeverData {
    pub pairs: Vec<LabeledPair>,
    /// `NOT ENOUGH INFO` records skipped.
    pub dropped_nei: usize,
}

#[derive(Deserialize)]
struct FeverRecord {
    claim: String,
    #[serde(default)]
    document: String,
    label: String,
}

/// Maps a FEVER verdict: `Some(None)` for `NOT ENOUGH INFO`, `None` for an
/// unknown verdict.
pub fn map_fever_label(label: &str) -> Option<Option<StanceLabel>> {
    match label {
        FEVER_SUPPORTS => Some(Some(StanceLabel::Agree)),
        FEVER_REFUTES => Some(Some(StanceLabel::Disagree)),
        FEVER_NEI => Some(None),
        _ => None,
    }
}

/// Source-domain pairs from a FEVER file. Blank lines are skipped; ids are
/// `fever-<line>`.
pub fn load_fever(path: &Path) -> Result<FeverData> {
    let reader = BufReader::new(open(path)?);
    let mut data = FeverData::default();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n as u64 + 1;
        let text = line.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let record: FeverRecord =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, line_no, e))?;
        let label = map_fever_label(&record.label).ok_or_else(|| Error::UnknownLabel {
            path: path.to_path_buf(),
            line: line_no,
            value: record.label.clone(),
        })?;
        let Some(label) = label else {
            data.dropped_nei += 1;
            continue;
        };
        non_empty(path, line_no, "claim", &record.claim)?;
        non_empty(path, line_no, "document", &record.document)?;
        data.pairs.push(LabeledPair::new(
            format!("fever-{line_no}"),
            record.claim,
            record.document,
            label,
            DomainTag::Source,
        ));
    }
    Ok(data)
}
