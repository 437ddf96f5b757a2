//! Adversarial domain adaptation for claim/document stance detection.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! modelling path:
//!
//! - [`textprep`]: tokenizer, vocabulary, TF / TF-IDF vectors, cosine similarity.
//! - [`data`]: stance labels, domain tags, validation splits and balanced
//!   per-epoch sampling of source and target pools.
//! - [`nn`]: a small double-precision tensor engine with hand-written
//!   backward passes, a gradient reversal layer, Adam and a finite-difference
//!   gradient checker.
//! - [`model`]: BOW + CNN feature extraction, the label MLP and the domain
//!   classifier sitting behind gradient reversal.
//! - [`trainer`]: the joint adversarial training loop and best-run selection.
//! - [`hierarchy`]: the related/unrelated gate followed by a 3-way classifier.
//! - [`metrics`]: accuracy, macro-F1 and the FNC weighted accuracy.
//! - [`checkpoint`]: the binary checkpoint codec.
//! - [`synth`]: a synthetic domain-shift benchmark.
//!
//! File IO, dataset loaders and the command-line tool live in the companion
//! `stance-dann` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod hierarchy;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod textprep;
pub mod trainer;

pub use error::{Error, Result};
