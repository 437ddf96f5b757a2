//! Dataset loaders, file formats and the command-line front end for
//! [`stance_dann_core`].
//!
//! - [`ingest`]: FNC CSV and FEVER JSONL loaders.
//! - [`dataset`]: the normalized line-delimited dataset the other commands
//!   read.
//! - [`embeddings`]: word2vec text-format vectors.
//! - [`manifest`]: run manifests with sha256 dataset fingerprints.
//! - [`parallel`]: bounded fan-out of independent runs.
//! - [`cmd`]: the `ingest`, `train`, `evaluate`, `predict`, `gradcheck` and
//!   `synthbench` subcommands.

pub mod cmd;
pub mod dataset;
pub mod embeddings;
mod error;
pub mod ingest;
pub mod manifest;
pub mod parallel;

pub use error::{Error, Result};
