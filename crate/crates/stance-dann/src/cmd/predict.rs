use std::path::PathBuf;

use super::evaluate::load_predictor;
use crate::dataset::{read_dataset, write_dataset, Record};
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub hierarchy: Option<PathBuf>,
    pub data: PathBuf,
    /// Normalized dataset with the predicted labels.
    pub out: PathBuf,
}

/// Labels every record of `data` (existing labels are ignored) and writes
/// the result. Returns the number of records.
pub fn run(args: &PredictArgs) -> Result<usize> {
    let predictor = load_predictor(&args.checkpoint, args.hierarchy.as_deref())?;
    let records = read_dataset(&args.data)?;
    let texts: Vec<(&str, &str)> = records
        .iter()
        .map(|r| (r.claim.as_str(), r.document.as_str()))
        .collect();
    let labels = predictor.predict(&texts)?;
    let out: Vec<Record> = records
        .into_iter()
        .zip(labels)
        .map(|(r, l)| Record {
            label: Some(l),
            ..r
        })
        .collect();
    write_dataset(&args.out, &out)?;
    Ok(out.len())
}
