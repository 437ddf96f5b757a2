use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use stance_dann_core::data::{DomainTag, StanceLabel};

use crate::dataset::{write_dataset, Record};
use crate::ingest::{load_fever, load_fnc};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct IngestArgs {
    pub fnc_stances: Option<PathBuf>,
    pub fnc_bodies: Option<PathBuf>,
    pub fever: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestSummary {
    /// `(domain, label)` counts.
    pub counts: BTreeMap<(&'static str, &'static str), usize>,
    pub dropped_nei: usize,
    pub total: usize,
}

impl IngestSummary {
    pub fn count(&self, domain: DomainTag, label: StanceLabel) -> usize {
        self.counts
            .get(&(domain.as_str(), label.as_str()))
            .copied()
            .unwrap_or(0)
    }
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for domain in [DomainTag::Source, DomainTag::Target] {
            let n: usize = StanceLabel::ALL
                .iter()
                .map(|&l| self.count(domain, l))
                .sum();
            if n == 0 {
                continue;
            }
            writeln!(f, "{domain}: {n}")?;
            for label in StanceLabel::ALL {
                let c = self.count(domain, label);
                if c > 0 {
                    writeln!(f, "  {label}: {c}")?;
                }
            }
        }
        writeln!(f, "dropped NOT ENOUGH INFO: {}", self.dropped_nei)?;
        write!(f, "total: {}", self.total)
    }
}

pub fn run(args: &IngestArgs) -> Result<IngestSummary> {
    let mut records: Vec<Record> = Vec::new();
    let mut summary = IngestSummary::default();
    match (&args.fnc_stances, &args.fnc_bodies) {
        (Some(stances), Some(bodies)) => {
            records.extend(load_fnc(stances, bodies)?.into_iter().map(Record::from));
        }
        (None, None) => {}
        _ => {
            return Err(Error::Invalid(
                "--fnc-stances and --fnc-bodies must be given together".into(),
            ))
        }
    }
    if let Some(path) = &args.fever {
        let fever = load_fever(path)?;
        summary.dropped_nei = fever.dropped_nei;
        records.extend(fever.pairs.into_iter().map(Record::from));
    }
    if args.fnc_stances.is_none() && args.fever.is_none() {
        return Err(Error::Invalid(
            "nothing to ingest: give FNC files, a FEVER file or both".into(),
        ));
    }
    for r in &records {
        let label = r.label.expect("ingested records are labeled");
        *summary
            .counts
            .entry((r.domain.as_str(), label.as_str()))
            .or_default() += 1;
    }
    summary.total = records.len();
    write_dataset(&args.out, &records)?;
    Ok(summary)
}
