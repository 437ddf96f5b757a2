//! word2vec text-format vectors: a `<count> <dim>` header, then one
//! `word v1 ... vdim` line per word.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use stance_dann_core::model::PretrainedEmbeddings;

use crate::ingest::open;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Word2Vec {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl Word2Vec {
    /// Loads every vector whose word passes `keep`. The header count is
    /// checked against the number of vector lines.
    pub fn load(path: &Path, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let mut lines = BufReader::new(open(path)?).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing `<count> <dim>` header"))?
            .map_err(|e| Error::io(path, e))?;
        let parsed: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, format!("bad header `{header}`")))?;
        let [count, dim] = parsed[..] else {
            return Err(Error::parse(path, 1, format!("bad header `{header}`")));
        };
        if dim == 0 {
            return Err(Error::parse(path, 1, "dimension must be positive"));
        }
        let mut table = Word2Vec {
            dim,
            ..Word2Vec::default()
        };
        let mut seen = 0;
        for (n, line) in lines.enumerate() {
            let line_no = n as u64 + 2;
            let text = line.map_err(|e| Error::io(path, e))?;
            if text.trim().is_empty() {
                continue;
            }
            seen += 1;
            let mut fields = text.split_whitespace();
            let word = fields.next().expect("non-blank line");
            if !keep(word) || table.index.contains_key(word) {
                continue;
            }
            let start = table.data.len();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("bad value `{f}`")))?;
                table.data.push(v);
            }
            let got = table.data.len() - start;
            if got != dim {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("`{word}` has {got} values, expected {dim}"),
                ));
            }
            table.index.insert(word.to_string(), start / dim);
        }
        if seen != count {
            return Err(Error::parse(
                path,
                1,
                format!("header announces {count} vectors, file has {seen}"),
            ));
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl PretrainedEmbeddings for Word2Vec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, word: &str) -> Option<&[f64]> {
        let i = *self.index.get(word)?;
        Some(&self.data[i * self.dim..(i + 1) * self.dim])
    }
}
