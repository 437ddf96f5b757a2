//! Accuracy, per-class and macro F1, and the FNC two-level weighted
//! accuracy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::StanceLabel;
use crate::{Error, Result};

fn check_lengths<L>(gold: &[L], pred: &[L]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("gold labels"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy<L: PartialEq>(gold: &[L], pred: &[L]) -> Result<f64> {
    check_lengths(gold, pred)?;
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Rows are gold classes, columns predicted classes, both in the order of
/// `classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix<L> {
    classes: Vec<L>,
    counts: Vec<u64>,
}

impl<L: PartialEq + Clone + fmt::Debug> ConfusionMatrix<L> {
    pub fn new(classes: &[L], gold: &[L], pred: &[L]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: gold.len(),
                right: pred.len(),
            });
        }
        let k = classes.len();
        let position = |l: &L| {
            classes
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::InvalidArgument(format!("label {l:?} not in class list")))
        };
        let mut counts = vec![0; k * k];
        for (g, p) in gold.iter().zip(pred) {
            counts[position(g)? * k + position(p)?] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn classes(&self) -> &[L] {
        &self.classes
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.classes.len() + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// F1 of class `c`, with every 0/0 taken as 0.
    pub fn f1(&self, c: usize) -> f64 {
        let k = self.classes.len();
        let tp = self.get(c, c) as f64;
        let predicted: u64 = (0..k).map(|g| self.get(g, c)).sum();
        let actual: u64 = (0..k).map(|p| self.get(c, p)).sum();
        let precision = ratio(tp, predicted as f64);
        let recall = ratio(tp, actual as f64);
        ratio(2.0 * precision * recall, precision + recall)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroF1 {
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
}

/// Unweighted mean of per-class F1 over the fixed `classes` list; classes
/// that never occur contribute 0.
pub fn macro_f1<L: PartialEq + Clone + fmt::Debug>(
    gold: &[L],
    pred: &[L],
    classes: &[L],
) -> Result<MacroF1> {
    check_lengths(gold, pred)?;
    if classes.is_empty() {
        return Err(Error::EmptyInput("class list"));
    }
    let cm = ConfusionMatrix::new(classes, gold, pred)?;
    let per_class: Vec<f64> = (0..classes.len()).map(|c| cm.f1(c)).collect();
    let macro_f1 = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(MacroF1 {
        macro_f1,
        per_class,
    })
}

/// FNC score normalised by the best attainable score on `gold`.
///
/// Each example earns 0.25 when the related/unrelated call is right, and a
/// further 0.75 when the gold label is related and predicted exactly. The
/// maximum is 0.25 per unrelated gold example and 1.0 per related one.
pub fn fnc_weighted_accuracy(gold: &[StanceLabel], pred: &[StanceLabel]) -> Result<f64> {
    check_lengths(gold, pred)?;
    let mut score = 0.0;
    let mut best = 0.0;
    for (&g, &p) in gold.iter().zip(pred) {
        if g.relatedness() == p.relatedness() {
            score += 0.25;
        }
        if g.is_related() {
            best += 1.0;
            if g == p {
                score += 0.75;
            }
        } else {
            best += 0.25;
        }
    }
    Ok(score / best)
}

/// One row of results: weighted accuracy, accuracy, macro-F1 and per-class
/// F1 in `agree / disagree / discuss / unrelated` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationReport {
    pub weighted_accuracy: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; 4],
}

impl EvaluationReport {
    pub fn compute(gold: &[StanceLabel], pred: &[StanceLabel]) -> Result<Self> {
        let f1 = macro_f1(gold, pred, &StanceLabel::ALL)?;
        let mut per_class_f1 = [0.0; 4];
        per_class_f1.copy_from_slice(&f1.per_class);
        Ok(EvaluationReport {
            weighted_accuracy: fnc_weighted_accuracy(gold, pred)?,
            accuracy: accuracy(gold, pred)?,
            macro_f1: f1.macro_f1,
            per_class_f1,
        })
    }

    /// Parses the printed row back (3-decimal precision).
    pub fn parse_row(row: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed report row `{row}`"));
        let fields: Vec<&str> = row.split_whitespace().collect();
        let [w, a, m, per] = fields[..] else {
            return Err(bad());
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let per: Vec<f64> = per.split('/').map(num).collect::<Result<_>>()?;
        let per_class_f1: [f64; 4] = per.try_into().map_err(|_| bad())?;
        Ok(EvaluationReport {
            weighted_accuracy: num(w)?,
            accuracy: num(a)?,
            macro_f1: num(m)?,
            per_class_f1,
        })
    }

    pub fn header() -> String {
        String::from("weighted_acc accuracy macro_f1 agree/disagree/discuss/unrelated")
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, d, s, u] = self.per_class_f1;
        write!(
            f,
            "{:.3} {:.3} {:.3} {a:.3}/{d:.3}/{s:.3}/{u:.3}",
            self.weighted_accuracy, self.accuracy, self.macro_f1
        )
    }
}
