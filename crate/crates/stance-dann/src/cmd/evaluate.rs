use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stance_dann_core::checkpoint;
use stance_dann_core::data::{DomainTag, StanceLabel};
use stance_dann_core::hierarchy::HierarchicalModel;
use stance_dann_core::metrics::EvaluationReport;
use stance_dann_core::model::StanceModel;

use super::{read_bytes, write};
use crate::dataset::{read_dataset, require_labels};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    /// Stage 2 checkpoint; makes `checkpoint` the stage 1 model.
    pub hierarchy: Option<PathBuf>,
    /// Only score examples of this domain.
    pub domain: Option<DomainTag>,
    /// Full-precision JSON copy of the report; defaults to
    /// `<checkpoint>.report.json`.
    pub sidecar: Option<PathBuf>,
}

#[allow(clippy::large_enum_variant)]
pub enum Predictor {
    Flat(StanceModel),
    Hierarchical(HierarchicalModel),
}

const SCORER_ORDER: [&str; 4] = ["agree", "disagree", "discuss", "unrelated"];

/// Loads a flat checkpoint, a hierarchical container, or a stage 1 /
/// stage 2 pair. Flat models must predict stances in scorer class order.
pub fn load_predictor(checkpoint_path: &Path, stage2: Option<&Path>) -> Result<Predictor> {
    let bytes = read_bytes(checkpoint_path)?;
    let in_file =
        |e: stance_dann_core::Error| Error::Invalid(format!("{}: {e}", checkpoint_path.display()));
    if checkpoint::is_hierarchy(&bytes) {
        if stage2.is_some() {
            return Err(Error::Invalid(format!(
                "{} already holds both stages",
                checkpoint_path.display()
            )));
        }
        let (_, s1, s2) = checkpoint::decode_hierarchy(&bytes).map_err(in_file)?;
        return Ok(Predictor::Hierarchical(HierarchicalModel::new(s1, s2)?));
    }
    let model = checkpoint::decode(&bytes).map_err(in_file)?;
    if let Some(path) = stage2 {
        let s2 = checkpoint::decode(&read_bytes(path)?)
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        return Ok(Predictor::Hierarchical(HierarchicalModel::new(model, s2)?));
    }
    let names = model.label_space().class_names();
    let mut rest = SCORER_ORDER.iter();
    if !names.iter().all(|n| rest.any(|s| s == n)) {
        return Err(Error::Invalid(format!(
            "class order mismatch: checkpoint predicts `{}`, scorer expects a subsequence of `{}`",
            names.join(","),
            SCORER_ORDER.join(",")
        )));
    }
    Ok(Predictor::Flat(model))
}

impl Predictor {
    /// Labels for `(claim, document)` pairs.
    pub fn predict(&self, texts: &[(&str, &str)]) -> Result<Vec<StanceLabel>> {
        Ok(match self {
            Predictor::Flat(m) => {
                let feats: Vec<_> = texts.iter().map(|(c, d)| m.extract(c, d)).collect();
                m.predict(&feats)?
            }
            Predictor::Hierarchical(h) => h.predict(texts)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub examples: usize,
    pub report: EvaluationReport,
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", EvaluationReport::header())?;
        write!(f, "{}", self.report)
    }
}

#[derive(Serialize)]
struct Sidecar {
    examples: usize,
    weighted_accuracy: f64,
    accuracy: f64,
    macro_f1: f64,
    per_class_f1: [(&'static str, f64); 4],
}

pub fn sidecar_json(e: &Evaluation) -> String {
    let r = &e.report;
    let per = r.per_class_f1;
    let sidecar = Sidecar {
        examples: e.examples,
        weighted_accuracy: r.weighted_accuracy,
        accuracy: r.accuracy,
        macro_f1: r.macro_f1,
        per_class_f1: [
            ("agree", per[0]),
            ("disagree", per[1]),
            ("discuss", per[2]),
            ("unrelated", per[3]),
        ],
    };
    serde_json::to_string_pretty(&sidecar).expect("plain numbers serialise")
}

pub fn default_sidecar(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

pub fn run(args: &EvaluateArgs) -> Result<Evaluation> {
    let predictor = load_predictor(&args.checkpoint, args.hierarchy.as_deref())?;
    let mut pairs = require_labels(&args.data, read_dataset(&args.data)?)?;
    if let Some(d) = args.domain {
        pairs.retain(|p| p.domain == d);
    }
    let texts: Vec<(&str, &str)> = pairs
        .iter()
        .map(|p| (p.claim.as_str(), p.document.as_str()))
        .collect();
    let pred = predictor.predict(&texts)?;
    let gold: Vec<StanceLabel> = pairs.iter().map(|p| p.label).collect();
    let evaluation = Evaluation {
        examples: pairs.len(),
        report: EvaluationReport::compute(&gold, &pred)?,
    };
    let sidecar = args
        .sidecar
        .clone()
        .unwrap_or_else(|| default_sidecar(&args.checkpoint));
    write(&sidecar, sidecar_json(&evaluation))?;
    Ok(evaluation)
}
