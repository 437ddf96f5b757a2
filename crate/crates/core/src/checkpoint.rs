//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "SDANNCK\0" | u32 version
//! u32 len | config text
//! u64 len | BOW vocabulary text      (len 0: no BOW vocabulary)
//! u64 len | embedding vocabulary text (len 0: none)
//! u32 parameter count
//! per parameter: u32 len | name | u32 ndim | u64 dims... | f64 values
//! ```
//!
//! A hierarchical container holds a manifest line with both stages' class
//! orders followed by two length-prefixed stage checkpoints.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::ModelConfig;
use crate::model::{FeatureSpace, Init, StanceModel};
use crate::textprep::Vocabulary;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SDANNCK\0";
pub const HIERARCHY_MAGIC: &[u8; 8] = b"SDNNHIER";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_blob32(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

fn put_blob64(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated checkpoint while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len64(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?)
            .map_err(|_| Error::Checkpoint(format!("{what}: length out of range")))
    }

    fn text(&mut self, n: usize, what: &str) -> Result<&'a str> {
        core::str::from_utf8(self.take(n, what)?)
            .map_err(|_| Error::Checkpoint(format!("{what} is not valid UTF-8")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Serialises a model: config, vocabularies and every parameter value.
pub fn encode(model: &StanceModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_blob32(&mut out, model.config().to_text().as_bytes());
    let space = model.feature_space();
    for vocab in [&space.bow, &space.embed] {
        let text = vocab.as_ref().map(Vocabulary::to_text).unwrap_or_default();
        put_blob64(&mut out, text.as_bytes());
    }
    let params = model.parameters();
    put_u32(&mut out, params.len() as u32);
    for p in params {
        put_blob32(&mut out, p.name.as_bytes());
        put_u32(&mut out, p.shape().len() as u32);
        for &d in p.shape() {
            put_u64(&mut out, d as u64);
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_vocab(r: &mut Reader<'_>, what: &str) -> Result<Option<Vocabulary>> {
    let n = r.len64(what)?;
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(Vocabulary::from_text(r.text(n, what)?)?))
}

fn decode_from(r: &mut Reader<'_>) -> Result<StanceModel> {
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint(
            "not a model checkpoint (bad magic)".into(),
        ));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version: unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let n = r.u32("config length")? as usize;
    let config = ModelConfig::from_text(r.text(n, "config")?)?;
    let bow = read_vocab(r, "bow vocabulary")?;
    let embed = read_vocab(r, "embedding vocabulary")?;
    let mut model = StanceModel::new(&config, FeatureSpace { bow, embed }, Init::Zeros)?;
    if model.config() != &config {
        return Err(Error::Checkpoint(
            "config vocabulary sizes disagree with the stored vocabularies".into(),
        ));
    }

    let count = r.u32("parameter count")? as usize;
    let mut params = model.parameters_mut();
    if count != params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count: file has {count}, config implies {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let n = r.u32("parameter name length")? as usize;
        let name = r.text(n, "parameter name")?;
        if name != p.name {
            return Err(Error::Checkpoint(format!(
                "parameter name: expected `{}`, found `{name}`",
                p.name
            )));
        }
        let ndim = r.u32("parameter rank")? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.len64("parameter shape")?);
        }
        if shape != p.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}`: shape {shape:?} does not match {:?}",
                p.shape()
            )));
        }
        let what = format!("values of `{name}`");
        let bytes = r.take(p.value.len() * 8, &what)?;
        for (v, chunk) in p.value.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    drop(params);
    Ok(model)
}

/// Restores a model. Fails without returning a partial model on any
/// truncation, trailing bytes, version or shape mismatch.
pub fn decode(bytes: &[u8]) -> Result<StanceModel> {
    let mut r = Reader::new(bytes);
    let model = decode_from(&mut r)?;
    r.finish()?;
    Ok(model)
}

/// Names the first config key whose values differ, ignoring the vocabulary
/// sizes, which are fixed by fitting.
pub fn config_mismatch(stored: &ModelConfig, requested: &ModelConfig) -> Option<String> {
    let mut requested = requested.clone();
    requested.bow_vocab_size = stored.bow_vocab_size;
    requested.embed_vocab_size = stored.embed_vocab_size;
    let a = stored.to_text();
    let b = requested.to_text();
    a.lines()
        .zip(b.lines())
        .find(|(x, y)| x != y)
        .map(|(x, y)| {
            let key = x.split('=').next().unwrap_or(x).trim();
            format!(
                "{key}: checkpoint has `{}`, requested `{}`",
                x.trim(),
                y.trim()
            )
        })
}

/// [`decode`], then checks the stored architecture against `requested`.
pub fn decode_expecting(bytes: &[u8], requested: &ModelConfig) -> Result<StanceModel> {
    let model = decode(bytes)?;
    if let Some(msg) = config_mismatch(model.config(), requested) {
        return Err(Error::Checkpoint(format!("config mismatch: {msg}")));
    }
    Ok(model)
}

/// The manifest line of a hierarchical container.
pub fn hierarchy_manifest(stage1: &StanceModel, stage2: &StanceModel) -> String {
    format!(
        "stage1={};stage2={}",
        stage1.label_space().class_order(),
        stage2.label_space().class_order()
    )
}

pub fn encode_hierarchy(stage1: &StanceModel, stage2: &StanceModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(HIERARCHY_MAGIC);
    put_u32(&mut out, VERSION);
    put_blob32(&mut out, hierarchy_manifest(stage1, stage2).as_bytes());
    put_blob64(&mut out, &encode(stage1));
    put_blob64(&mut out, &encode(stage2));
    out
}

/// Returns `(manifest, stage1, stage2)`.
pub fn decode_hierarchy(bytes: &[u8]) -> Result<(String, StanceModel, StanceModel)> {
    let mut r = Reader::new(bytes);
    if r.take(HIERARCHY_MAGIC.len(), "magic")? != HIERARCHY_MAGIC {
        return Err(Error::Checkpoint(
            "not a hierarchical checkpoint (bad magic)".into(),
        ));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version: unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let n = r.u32("manifest length")? as usize;
    let manifest = r.text(n, "manifest")?.to_string();
    let n = r.len64("stage 1 length")?;
    let stage1 = decode(r.take(n, "stage 1")?)?;
    let n = r.len64("stage 2 length")?;
    let stage2 = decode(r.take(n, "stage 2")?)?;
    r.finish()?;
    if manifest != hierarchy_manifest(&stage1, &stage2) {
        return Err(Error::Checkpoint(format!(
            "manifest `{manifest}` does not match the stage models"
        )));
    }
    Ok((manifest, stage1, stage2))
}

/// Whether `bytes` start like a hierarchical container.
pub fn is_hierarchy(bytes: &[u8]) -> bool {
    bytes.starts_with(HIERARCHY_MAGIC)
}
