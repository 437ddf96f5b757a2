use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use stance_dann::cmd::{evaluate, gradcheck, ingest, predict, synthbench, train};
use stance_dann_core::data::DomainTag;

#[derive(Parser)]
#[command(
    name = "stance-dann",
    version,
    about = "Adversarial domain adaptation for stance detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert FNC and/or FEVER files into one normalized dataset.
    Ingest {
        #[arg(long, requires = "fnc_bodies")]
        fnc_stances: Option<PathBuf>,
        #[arg(long, requires = "fnc_stances")]
        fnc_bodies: Option<PathBuf>,
        #[arg(long)]
        fever: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one or more runs and keep the one with the lowest validation loss.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// word2vec text file used to initialise the embedding table.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score a checkpoint on labeled data.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        /// Only score examples of this domain (source or target).
        #[arg(long)]
        domain: Option<DomainTag>,
        /// Where to write the full-precision JSON report.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Label a dataset with a checkpoint.
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every layer and of a small instance of the
    /// configured architecture.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Check BOW, CNN and BOW+CNN, each with and without adaptation.
        #[arg(long)]
        all_variants: bool,
        #[arg(long, hide = true)]
        corrupt_backward: Option<String>,
    },
    /// Synthetic domain-shift benchmark comparing adapted and unadapted models.
    Synthbench {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Model checkpoint, hierarchical container, or stage 1 checkpoint when
    /// --hierarchy is given.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Stage 2 checkpoint.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Ingest {
            fnc_stances,
            fnc_bodies,
            fever,
            out,
        } => {
            let summary = ingest::run(&ingest::IngestArgs {
                fnc_stances,
                fnc_bodies,
                fever,
                out: out.clone(),
            })
            .context("ingest failed")?;
            println!("{summary}");
            println!("wrote {}", out.display());
        }
        Command::Train {
            config,
            data,
            out_dir,
            runs,
            seed,
            embeddings,
        } => {
            let outcome = train::run(&train::TrainArgs {
                config,
                data,
                out_dir: out_dir.clone(),
                runs,
                seed,
                embeddings,
            })
            .context("training failed")?;
            let best = outcome.manifest.best_run.expect("set after training");
            println!("trained {} run(s); best run {best}", outcome.manifest.runs);
            println!("wrote {}", out_dir.join(train::CHECKPOINT_FILE).display());
        }
        Command::Evaluate {
            model,
            data,
            domain,
            sidecar,
        } => {
            let e = evaluate::run(&evaluate::EvaluateArgs {
                checkpoint: model.checkpoint,
                data,
                hierarchy: model.hierarchy,
                domain,
                sidecar,
            })
            .context("evaluation failed")?;
            println!("{e}");
        }
        Command::Predict { model, data, out } => {
            let n = predict::run(&predict::PredictArgs {
                checkpoint: model.checkpoint,
                hierarchy: model.hierarchy,
                data,
                out: out.clone(),
            })
            .context("prediction failed")?;
            println!("labeled {n} records into {}", out.display());
        }
        Command::Gradcheck {
            config,
            seed,
            lambda,
            all_variants,
            corrupt_backward,
        } => {
            let report = gradcheck::run(&gradcheck::GradcheckArgs {
                config,
                seed,
                lambda,
                all_variants,
                corrupt_backward,
            })
            .context("gradient check failed to run")?;
            println!("{report}");
            return Ok(report.passed());
        }
        Command::Synthbench {
            seed,
            out_dir,
            seeds,
            epochs,
        } => {
            let report = synthbench::run(&synthbench::SynthbenchArgs {
                seed,
                out_dir,
                seeds,
                epochs,
            })
            .context("benchmark failed")?;
            println!("{report}");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
