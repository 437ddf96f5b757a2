use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use stance_dann_core::checkpoint;
use stance_dann_core::config::RunConfig;
use stance_dann_core::data::{DomainTag, LabeledPair};
use stance_dann_core::hierarchy::train_hierarchical;
use stance_dann_core::model::PretrainedEmbeddings;
use stance_dann_core::textprep::tokenize;
use stance_dann_core::trainer::{select_best_index, train_run, TrainSetup, TrainingHistory};

use super::{create_dir, read_text, write};
use crate::dataset::{read_dataset, require_labels};
use crate::embeddings::Word2Vec;
use crate::manifest::{fingerprint, Artifacts, RunManifest};
use crate::parallel::{map_indexed, thread_cap};
use crate::Result;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_FILE: &str = "history.gnuplot";

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    /// Config file; defaults apply when absent.
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides the config's `runs`.
    pub runs: Option<usize>,
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
    /// word2vec text file for the embedding table.
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub manifest: RunManifest,
    /// Per run: one history, or stage 1 and stage 2 histories.
    pub histories: Vec<Vec<TrainingHistory>>,
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::parse(&read_text(p)?)?),
        None => Ok(RunConfig::default()),
    }
}

fn history_names(runs: usize, hierarchical: bool) -> Vec<Vec<String>> {
    (0..runs)
        .map(|i| {
            if hierarchical {
                vec![
                    format!("history-run{i}-stage1.tsv"),
                    format!("history-run{i}-stage2.tsv"),
                ]
            } else {
                vec![format!("history-run{i}.tsv")]
            }
        })
        .collect()
}

/// gnuplot script drawing the validation losses of `history_file`.
pub fn plot_script(history_file: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile missing '-'");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'epoch'");
    let _ = writeln!(s, "set ylabel 'loss'");
    let _ = writeln!(
        s,
        "plot '{history_file}' using 1:5 with lines, '' using 1:6 with lines"
    );
    s
}

fn vocabulary_of(pairs: &[LabeledPair]) -> HashSet<String> {
    pairs
        .iter()
        .flat_map(|p| tokenize(&p.claim).into_iter().chain(tokenize(&p.document)))
        .collect()
}

pub fn run(args: &TrainArgs) -> Result<TrainOutcome> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(runs) = args.runs {
        config.train.runs = runs;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    config.train.validate()?;
    let pairs = require_labels(&args.data, read_dataset(&args.data)?)?;
    let (source, target): (Vec<LabeledPair>, Vec<LabeledPair>) = pairs
        .into_iter()
        .partition(|p| p.domain == DomainTag::Source);

    let runs = config.train.runs;
    let hierarchical = config.hierarchy.enabled;
    let names = history_names(runs, hierarchical);
    let mut manifest = RunManifest {
        config: config.to_text().lines().map(str::to_string).collect(),
        seed: config.train.seed,
        runs,
        datasets: vec![fingerprint(&args.data)?],
        embeddings: args.embeddings.as_deref().map(fingerprint).transpose()?,
        artifacts: Artifacts {
            checkpoint: CHECKPOINT_FILE.into(),
            histories: names.iter().flatten().cloned().collect(),
            plot: PLOT_FILE.into(),
        },
        best_run: None,
    };
    create_dir(&args.out_dir)?;
    let manifest_path = args.out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let vectors = match &args.embeddings {
        Some(path) if config.model.use_cnn => {
            let words = vocabulary_of(&source);
            let words: HashSet<String> = words.union(&vocabulary_of(&target)).cloned().collect();
            Some(Word2Vec::load(path, |w| words.contains(w))?)
        }
        _ => None,
    };
    let threads = thread_cap()?;
    let setup = |model| TrainSetup {
        model,
        train: &config.train,
        source: &source,
        target: &target,
        pretrained: vectors.as_ref().map(|v| v as &dyn PretrainedEmbeddings),
    };

    let (histories, checkpoints): (Vec<Vec<TrainingHistory>>, Vec<Vec<u8>>) = if hierarchical {
        let results = map_indexed(runs, threads, |i| {
            train_hierarchical(&config.model, &config.hierarchy, &setup(&config.model), i)
        });
        let mut hs = Vec::new();
        let mut cks = Vec::new();
        for r in results {
            let r = r?;
            cks.push(checkpoint::encode_hierarchy(
                &r.model.stage1,
                &r.model.stage2,
            ));
            hs.push(vec![r.stage1_history, r.stage2_history]);
        }
        (hs, cks)
    } else {
        let results = map_indexed(runs, threads, |i| train_run(&setup(&config.model), i));
        let mut hs = Vec::new();
        let mut cks = Vec::new();
        for r in results {
            let r = r?;
            cks.push(checkpoint::encode(&r.model));
            hs.push(vec![r.history]);
        }
        (hs, cks)
    };

    for (files, hs) in names.iter().zip(&histories) {
        for (file, h) in files.iter().zip(hs) {
            write(&args.out_dir.join(file), h.to_log())?;
        }
    }
    // The hierarchy is ranked by its stage 2 history.
    let ranked: Vec<&TrainingHistory> = histories
        .iter()
        .map(|h| h.last().expect("one per run"))
        .collect();
    let best = select_best_index(&ranked, config.train.selection_loss)?;
    write(&args.out_dir.join(CHECKPOINT_FILE), &checkpoints[best])?;
    let best_history = names[best].last().expect("one per run");
    write(&args.out_dir.join(PLOT_FILE), plot_script(best_history))?;
    manifest.best_run = Some(best);
    manifest.write(&manifest_path)?;
    Ok(TrainOutcome {
        manifest,
        histories,
    })
}
