//! Bag-of-words half of the feature extractor: tokenizer, vocabulary,
//! TF / TF-IDF vectors and cosine similarity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::{Error, Result};

/// Default BOW vocabulary size.
pub const DEFAULT_MAX_TERMS: usize = 5000;

/// Lowercases `text` and splits it on every maximal run of non-alphanumeric
/// characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

/// Term index with document frequencies.
///
/// Terms are ordered by descending document frequency, ties broken by
/// lexicographic order, and that order is the index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: BTreeMap<String, usize>,
    doc_freq: Vec<usize>,
    corpus_size: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from tokenized documents, keeping the `max_terms`
    /// most document-frequent terms.
    pub fn build<D, T>(corpus: &[D], max_terms: usize) -> Result<Self>
    where
        D: AsRef<[T]>,
        T: AsRef<str>,
    {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if max_terms == 0 {
            return Err(Error::InvalidArgument("max_terms must be positive".into()));
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in corpus {
            let unique: BTreeSet<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
            for term in unique {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        // BTreeMap iteration is lexicographic, and the sort is stable.
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        ranked.sort_by_key(|&(_, n)| core::cmp::Reverse(n));
        ranked.truncate(max_terms);
        Self::from_counts(
            ranked.into_iter().map(|(t, n)| (t.to_string(), n)),
            corpus.len(),
        )
    }

    /// Assembles a vocabulary from `(term, doc_freq)` pairs in index order.
    pub fn from_counts<I>(entries: I, corpus_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (String, usize)>,
    {
        if corpus_size == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Vocabulary {
            terms: Vec::new(),
            index: BTreeMap::new(),
            doc_freq: Vec::new(),
            corpus_size,
        };
        for (term, df) in entries {
            if df == 0 || df > corpus_size {
                return Err(Error::InvalidArgument(format!(
                    "document frequency {df} of `{term}` outside [1, {corpus_size}]"
                )));
            }
            if vocab
                .index
                .insert(term.clone(), vocab.terms.len())
                .is_some()
            {
                return Err(Error::InvalidArgument(format!("duplicate term `{term}`")));
            }
            vocab.terms.push(term);
            vocab.doc_freq.push(df);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn doc_freq(&self, index: usize) -> Option<usize> {
        self.doc_freq.get(index).copied()
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.doc_freq[index] as f64;
        libm::log((1.0 + n) / (1.0 + df)) + 1.0
    }

    pub fn idf_vector(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.idf(i)).collect()
    }

    /// Line-oriented form: `#corpus_size=N`, then `term<TAB>doc_freq` per
    /// term in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#corpus_size={}", self.corpus_size);
        for (term, df) in self.terms.iter().zip(&self.doc_freq) {
            let _ = writeln!(out, "{term}\t{df}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::VocabularyFormat {
            line: 1,
            message: "missing `#corpus_size=` header".into(),
        })?;
        let corpus_size = header
            .strip_prefix("#corpus_size=")
            .and_then(|n| n.trim().parse::<usize>().ok())
            .ok_or(Error::VocabularyFormat {
                line: 1,
                message: format!("bad header `{header}`"),
            })?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (term, df) = line.split_once('\t').ok_or(Error::VocabularyFormat {
                line: i + 1,
                message: "expected `term<TAB>doc_freq`".into(),
            })?;
            let df = df.parse::<usize>().map_err(|_| Error::VocabularyFormat {
                line: i + 1,
                message: format!("bad document frequency `{df}`"),
            })?;
            entries.push((term.to_string(), df));
        }
        Self::from_counts(entries, corpus_size)
    }
}

/// Raw counts of each vocabulary term in `tokens`; out-of-vocabulary tokens
/// are ignored.
pub fn tf_vector<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> Vec<f64> {
    let mut tf = alloc::vec![0.0; vocab.len()];
    for token in tokens {
        if let Some(i) = vocab.get(token.as_ref()) {
            tf[i] += 1.0;
        }
    }
    tf
}

pub fn tfidf_vector<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> Vec<f64> {
    let mut v = tf_vector(tokens, vocab);
    for (i, x) in v.iter_mut().enumerate() {
        if *x != 0.0 {
            *x *= vocab.idf(i);
        }
    }
    v
}

/// `dot(u, v) / (|u| |v|)`, or 0 when either vector has zero norm.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let cos = dot / libm::sqrt(nu * nv);
    Ok(cos.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn vocab_abc() -> Vocabulary {
        Vocabulary::from_counts(
            [("a", 1), ("b", 1), ("c", 1)]
                .into_iter()
                .map(|(t, n)| (t.to_string(), n)),
            1,
        )
        .unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The cat sat."), toks(&["the", "cat", "sat"]));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("COVID-19 spreads"),
            toks(&["covid", "19", "spreads"])
        );
        assert!(tokenize("  --  ...").is_empty());
    }

    #[test]
    fn build_vocab_breaks_ties_lexicographically() {
        let corpus = vec![toks(&["a", "b"]), toks(&["a", "c"])];
        let v = Vocabulary::build(&corpus, 2).unwrap();
        assert_eq!(v.terms(), &toks(&["a", "b"])[..]);
        assert_eq!(v.doc_freq(0), Some(2));
        assert_eq!(v.doc_freq(1), Some(1));
        assert_eq!(v.get("c"), None);
        assert_eq!(v.corpus_size(), 2);
    }

    #[test]
    fn build_vocab_small_cases() {
        let v = Vocabulary::build(&[toks(&["x"])], 10).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.corpus_size(), 1);

        let v = Vocabulary::build(&[toks(&["a"]), toks(&["a"])], 1).unwrap();
        assert_eq!(v.terms(), &toks(&["a"])[..]);
        assert_eq!(v.doc_freq(0), Some(2));

        // Repeats inside one document count once.
        let v = Vocabulary::build(&[toks(&["a", "a", "a"])], 5).unwrap();
        assert_eq!(v.doc_freq(0), Some(1));
    }

    #[test]
    fn build_vocab_rejects_empty_corpus() {
        let empty: Vec<Vec<String>> = Vec::new();
        let err = Vocabulary::build(&empty, 3).unwrap_err();
        assert_eq!(err, Error::EmptyCorpus);
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn tf_examples() {
        let v = vocab_abc();
        assert_eq!(tf_vector(&toks(&["a", "a", "b"]), &v), vec![2.0, 1.0, 0.0]);
        assert_eq!(tf_vector::<String>(&[], &v), vec![0.0; 3]);
        let ab = Vocabulary::build(&[toks(&["a", "b"])], 5).unwrap();
        assert_eq!(tf_vector(&toks(&["z"]), &ab), vec![0.0, 0.0]);
    }

    #[test]
    fn tfidf_smoothed_idf() {
        let v = Vocabulary::build(&[toks(&["a"]), toks(&["a", "b"])], 10).unwrap();
        let x = tfidf_vector(&toks(&["b"]), &v);
        let b = v.get("b").unwrap();
        let a = v.get("a").unwrap();
        // ln(3/2) + 1
        assert!((x[b] - 1.405_465_108_108_164_3).abs() < 1e-12);
        assert_eq!(x[a], 0.0);
        // `a` occurs in every document: idf = 1.
        assert_eq!(v.idf(a), 1.0);
        assert_eq!(tfidf_vector(&toks(&["a", "a"]), &v)[a], 2.0);
        assert!(tfidf_vector::<String>(&[], &v).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let err = cosine_similarity(&[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().starts_with("dimension mismatch"));
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let corpus = vec![toks(&["b", "a"]), toks(&["a", "c"]), toks(&["c"])];
        let v = Vocabulary::build(&corpus, 10).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("#corpus_size=3\n"));
        assert_eq!(text.lines().nth(1), Some("a\t2"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);
    }

    #[test]
    fn vocabulary_text_errors() {
        assert!(matches!(
            Vocabulary::from_text("a\t1\n"),
            Err(Error::VocabularyFormat { line: 1, .. })
        ));
        assert!(matches!(
            Vocabulary::from_text("#corpus_size=2\na 1\n"),
            Err(Error::VocabularyFormat { line: 2, .. })
        ));
        assert!(Vocabulary::from_text("#corpus_size=2\na\t3\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tokenize_idempotent(s in "[a-zA-Z0-9 ,.;:!?'\"()-]{0,80}") {
                let once = tokenize(&s);
                let twice = tokenize(&once.join(" "));
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn tf_sums_to_in_vocab_count(words in proptest::collection::vec("[a-e]", 0..30)) {
                let v = Vocabulary::build(&[toks(&["a", "b", "c"])], 10).unwrap();
                let tf = tf_vector(&words, &v);
                let in_vocab = words.iter().filter(|w| v.get(w).is_some()).count();
                prop_assert!(tf.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
                prop_assert_eq!(tf.iter().sum::<f64>(), in_vocab as f64);
            }

            #[test]
            fn tfidf_is_tf_times_idf(
                docs in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..6), 1..8),
                query in proptest::collection::vec("[a-g]", 0..12),
            ) {
                let v = Vocabulary::build(&docs, 4).unwrap();
                let tf = tf_vector(&query, &v);
                let tfidf = tfidf_vector(&query, &v);
                let idf = v.idf_vector();
                prop_assert!(idf.iter().all(|&x| x >= 1.0));
                for i in 0..v.len() {
                    prop_assert_eq!(tfidf[i], tf[i] * idf[i]);
                }
            }

            #[test]
            fn cosine_scale_invariant(
                u in proptest::collection::vec(-10.0f64..10.0, 1..10),
                alpha in 0.01f64..100.0,
            ) {
                let v: Vec<f64> = u.iter().rev().copied().collect();
                let norm: f64 = u.iter().map(|x| x * x).sum();
                prop_assume!(norm > 1e-6);
                prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
                let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
                let a = cosine_similarity(&scaled, &v).unwrap();
                let b = cosine_similarity(&u, &v).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
