use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use stance_dann_core::synth::{
    bench_model_config, bench_seeds, bench_train_config, final_third_slopes, generate, run_variant,
    SeedResult, SynthConfig,
};

use super::{create_dir, write};
use crate::parallel::{map_indexed, thread_cap};
use crate::Result;

pub const REPORT_FILE: &str = "synthbench.txt";
pub const JSON_FILE: &str = "synthbench.json";

/// Domain probe accuracy the adapted features must stay under.
pub const PROBE_ADAPTED_MAX: f64 = 0.65;
/// Domain probe accuracy the unadapted features must reach.
pub const PROBE_PLAIN_MIN: f64 = 0.85;
/// How far adapted macro-F1 may trail the unadapted one.
pub const F1_MARGIN: f64 = 0.02;
/// Seeds on which adaptation must win, and on which the loss trends must
/// hold, out of five.
pub const REQUIRED_SEEDS: usize = 4;

#[derive(Debug, Clone)]
pub struct SynthbenchArgs {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub seeds: usize,
    /// Overrides the benchmark's epoch count.
    pub epochs: Option<usize>,
}

impl Default for SynthbenchArgs {
    fn default() -> Self {
        SynthbenchArgs {
            seed: 0,
            out_dir: PathBuf::from("synthbench"),
            seeds: 5,
            epochs: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthbenchReport {
    pub epochs: usize,
    pub seeds: Vec<SeedResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Assessment {
    pub probe_separates: bool,
    pub f1_within_margin: bool,
    pub f1_wins: usize,
    pub trend_holds: usize,
    /// Some seed has fewer than two epochs in its final third.
    pub insufficient_training: bool,
}

impl Assessment {
    pub fn passed(&self) -> bool {
        self.probe_separates
            && self.f1_within_margin
            && self.f1_wins >= REQUIRED_SEEDS
            && self.trend_holds >= REQUIRED_SEEDS
            && !self.insufficient_training
    }
}

pub fn trend_holds(s: &SeedResult) -> bool {
    matches!((s.label_slope, s.domain_slope), (Some(l), Some(d)) if l <= 0.0 && d >= 0.0)
}

impl SynthbenchReport {
    pub fn assess(&self) -> Assessment {
        let s = &self.seeds;
        Assessment {
            probe_separates: s.iter().all(|r| {
                r.adapted.probe_accuracy <= PROBE_ADAPTED_MAX
                    && r.plain.probe_accuracy >= PROBE_PLAIN_MIN
            }),
            f1_within_margin: s
                .iter()
                .all(|r| r.adapted.target_macro_f1 >= r.plain.target_macro_f1 - F1_MARGIN),
            f1_wins: s
                .iter()
                .filter(|r| r.adapted.target_macro_f1 > r.plain.target_macro_f1)
                .count(),
            trend_holds: s.iter().filter(|r| trend_holds(r)).count(),
            insufficient_training: s
                .iter()
                .any(|r| r.label_slope.is_none() || r.domain_slope.is_none()),
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            seed: u64,
            adapted_macro_f1: f64,
            plain_macro_f1: f64,
            adapted_probe_accuracy: f64,
            plain_probe_accuracy: f64,
            val_label_loss_slope: Option<f64>,
            val_domain_loss_slope: Option<f64>,
        }
        #[derive(Serialize)]
        struct Json {
            epochs: usize,
            seeds: Vec<Row>,
            assessment: Assessment,
        }
        let json = Json {
            epochs: self.epochs,
            seeds: self
                .seeds
                .iter()
                .map(|r| Row {
                    seed: r.seed,
                    adapted_macro_f1: r.adapted.target_macro_f1,
                    plain_macro_f1: r.plain.target_macro_f1,
                    adapted_probe_accuracy: r.adapted.probe_accuracy,
                    plain_probe_accuracy: r.plain.probe_accuracy,
                    val_label_loss_slope: r.label_slope,
                    val_domain_loss_slope: r.domain_slope,
                })
                .collect(),
            assessment: self.assess(),
        };
        serde_json::to_string_pretty(&json).expect("plain numbers serialise")
    }
}

fn slope(s: Option<f64>) -> String {
    s.map_or_else(|| "-".into(), |v| format!("{v:+.2e}"))
}

impl fmt::Display for SynthbenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "synthetic domain-shift benchmark, {} epochs",
            self.epochs
        )?;
        writeln!(
            f,
            "{:>20}  {:>8} {:>8}  {:>8} {:>8}  {:>10} {:>10}",
            "seed", "f1 da", "f1 noda", "probe da", "probe noda", "val label", "val domain"
        )?;
        for r in &self.seeds {
            writeln!(
                f,
                "{:>20}  {:>8.4} {:>8.4}  {:>8.4} {:>10.4}  {:>10} {:>10}",
                r.seed,
                r.adapted.target_macro_f1,
                r.plain.target_macro_f1,
                r.adapted.probe_accuracy,
                r.plain.probe_accuracy,
                slope(r.label_slope),
                slope(r.domain_slope)
            )?;
        }
        let a = self.assess();
        let n = self.seeds.len();
        let v = |ok: bool| if ok { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "{} domain probe: adapted <= {PROBE_ADAPTED_MAX}, unadapted >= {PROBE_PLAIN_MIN} on every seed",
            v(a.probe_separates)
        )?;
        writeln!(
            f,
            "{} adapted macro-F1 >= unadapted - {F1_MARGIN} on every seed",
            v(a.f1_within_margin)
        )?;
        writeln!(
            f,
            "{} adapted macro-F1 > unadapted on {}/{n} seeds (need {REQUIRED_SEEDS})",
            v(a.f1_wins >= REQUIRED_SEEDS),
            a.f1_wins
        )?;
        writeln!(
            f,
            "{} final-third slopes: val label <= 0 and val domain >= 0 on {}/{n} seeds (need {REQUIRED_SEEDS})",
            v(a.trend_holds >= REQUIRED_SEEDS),
            a.trend_holds
        )?;
        if a.insufficient_training {
            writeln!(
                f,
                "insufficient training: {} epochs leave fewer than two epochs in the final third",
                self.epochs
            )?;
        }
        write!(f, "{}", if a.passed() { "PASS" } else { "FAIL" })
    }
}

/// Runs both variants on every seed.
pub fn bench(seed: u64, seeds: usize, epochs: Option<usize>) -> Result<SynthbenchReport> {
    let cfg = SynthConfig::default();
    let seed_list = bench_seeds(seed, seeds);
    let epochs = epochs.unwrap_or(bench_train_config(0).epochs);
    let runs = map_indexed(2 * seeds, thread_cap()?, |job| {
        let s = seed_list[job / 2];
        let data = generate(&cfg, s);
        let mut train = bench_train_config(s);
        train.epochs = epochs;
        run_variant(&data, &bench_model_config(job % 2 == 0), &train)
    });
    let mut runs = runs.into_iter();
    let mut out = Vec::with_capacity(seeds);
    for &s in &seed_list {
        let adapted = runs.next().expect("two runs per seed")?;
        let plain = runs.next().expect("two runs per seed")?;
        let (label_slope, domain_slope) = final_third_slopes(&adapted.history);
        out.push(SeedResult {
            seed: s,
            adapted,
            plain,
            label_slope,
            domain_slope,
        });
    }
    Ok(SynthbenchReport { epochs, seeds: out })
}

pub fn run(args: &SynthbenchArgs) -> Result<SynthbenchReport> {
    let report = bench(args.seed, args.seeds, args.epochs)?;
    create_dir(&args.out_dir)?;
    for (i, r) in report.seeds.iter().enumerate() {
        write(
            &args.out_dir.join(format!("seed{i}-da.history.tsv")),
            r.adapted.history.to_log(),
        )?;
        write(
            &args.out_dir.join(format!("seed{i}-noda.history.tsv")),
            r.plain.history.to_log(),
        )?;
    }
    write(&args.out_dir.join(REPORT_FILE), format!("{report}\n"))?;
    write(&args.out_dir.join(JSON_FILE), report.to_json())?;
    Ok(report)
}
