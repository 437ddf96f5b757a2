//! Feature extraction, the label-prediction MLP and the domain classifier
//! behind gradient reversal.
//!
//! The feature vector of one example is laid out as
//!
//! ```text
//! [ claim TF | document TF | cosine(tfidf) ]  [ claim convs | document convs ]
//!  \______________ BOW block _____________/    \________ CNN block ________/
//! ```
//!
//! Either block may be disabled. The label head reads every enabled block;
//! the domain head reads only the blocks named in `da_features`, through a
//! [`GradientReversal`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::config::{FeatureKinds, LabelSpace, ModelConfig};
use crate::data::{DomainTag, LabeledPair, Relatedness, StanceLabel};
use crate::nn::gradcheck::Objective;
use crate::nn::{
    conv1d_maxpool, conv1d_maxpool_backward, dense, dense_backward, embed_backward, embed_lookup,
    relu, relu_backward, softmax_cross_entropy, softmax_cross_entropy_backward, ConvPool,
    GradientReversal, Parameter, Tensor,
};
use crate::rng::{self, Rng};
use crate::textprep::{cosine_similarity, tf_vector, tfidf_vector, tokenize, Vocabulary};
use crate::{Error, Result};

/// Id of the all-zero padding row of the embedding table.
pub const PADDING_ID: usize = 0;

/// Name prefix of the domain classifier's parameters.
pub const DOMAIN_PREFIX: &str = "domain.";

/// Range of the uniform initialisation of embeddings not found in a
/// pretrained table.
pub const EMBEDDING_INIT_RANGE: f64 = 0.25;

/// Vocabularies the feature extractor needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub bow: Option<Vocabulary>,
    /// Embedding vocabulary; term `i` has token id `i + 1`.
    pub embed: Option<Vocabulary>,
}

impl FeatureSpace {
    /// Fits the vocabularies a config needs. The BOW vocabulary sees target
    /// text only unless `bow_include_source` is set; the embedding
    /// vocabulary sees all training text. Claims and documents each count as
    /// one corpus document.
    pub fn fit(
        config: &ModelConfig,
        source: &[&LabeledPair],
        target: &[&LabeledPair],
    ) -> Result<Self> {
        fn corpus<'a>(pairs: impl Iterator<Item = &'a &'a LabeledPair>) -> Vec<Vec<String>> {
            pairs
                .flat_map(|p| [tokenize(&p.claim), tokenize(&p.document)])
                .collect()
        }
        let bow = if config.use_bow {
            let docs = if config.bow_include_source {
                corpus(target.iter().chain(source))
            } else {
                corpus(target.iter())
            };
            Some(Vocabulary::build(&docs, config.bow_vocab_size.max(1))?)
        } else {
            None
        };
        let embed = if config.use_cnn {
            let docs = corpus(target.iter().chain(source));
            Some(Vocabulary::build(&docs, config.embed_vocab_size.max(1))?)
        } else {
            None
        };
        Ok(FeatureSpace { bow, embed })
    }

    /// Sets the vocabulary sizes of `config` to the fitted sizes.
    pub fn resolve(&self, config: &ModelConfig) -> ModelConfig {
        let mut resolved = config.clone();
        if let Some(v) = &self.bow {
            resolved.bow_vocab_size = v.len();
        }
        if let Some(v) = &self.embed {
            resolved.embed_vocab_size = v.len();
        }
        resolved
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        let mismatch = |what: &str| Error::Config {
            key: what.to_string(),
            message: "does not match the feature space".into(),
        };
        match (&self.bow, config.use_bow) {
            (Some(v), true) if v.len() == config.bow_vocab_size => {}
            (None, false) => {}
            _ => return Err(mismatch("bow_vocab_size")),
        }
        match (&self.embed, config.use_cnn) {
            (Some(v), true) if v.len() == config.embed_vocab_size => {}
            (None, false) => {}
            _ => return Err(mismatch("embed_vocab_size")),
        }
        Ok(())
    }
}

/// Model inputs for one claim/document pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    /// Claim TF ⊕ document TF ⊕ TF-IDF cosine; empty when BOW is disabled.
    pub bow: Vec<f64>,
    /// Exactly `claim_max_len` ids; empty when the CNN is disabled.
    pub claim_ids: Vec<usize>,
    /// Exactly `doc_max_len` ids; empty when the CNN is disabled.
    pub doc_ids: Vec<usize>,
}

fn token_ids(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokens
        .iter()
        .filter_map(|t| vocab.get(t).map(|i| i + 1))
        .take(max_len)
        .collect();
    ids.resize(max_len, PADDING_ID);
    ids
}

/// Features of a raw claim/document pair. Out-of-vocabulary tokens are
/// dropped; id sequences are truncated or right-padded with
/// [`PADDING_ID`].
pub fn extract_text_features(
    claim: &str,
    document: &str,
    space: &FeatureSpace,
    config: &ModelConfig,
) -> FeatureBundle {
    let claim_tokens = tokenize(claim);
    let doc_tokens = tokenize(document);
    let mut bundle = FeatureBundle {
        bow: Vec::new(),
        claim_ids: Vec::new(),
        doc_ids: Vec::new(),
    };
    if let (true, Some(vocab)) = (config.use_bow, &space.bow) {
        let mut bow = tf_vector(&claim_tokens, vocab);
        bow.extend(tf_vector(&doc_tokens, vocab));
        let cos = cosine_similarity(
            &tfidf_vector(&claim_tokens, vocab),
            &tfidf_vector(&doc_tokens, vocab),
        )
        .unwrap_or(0.0);
        bow.push(cos);
        bundle.bow = bow;
    }
    if let (true, Some(vocab)) = (config.use_cnn, &space.embed) {
        bundle.claim_ids = token_ids(&claim_tokens, vocab, config.claim_max_len);
        bundle.doc_ids = token_ids(&doc_tokens, vocab, config.doc_max_len);
    }
    bundle
}

pub fn extract_features(
    pair: &LabeledPair,
    space: &FeatureSpace,
    config: &ModelConfig,
) -> FeatureBundle {
    extract_text_features(&pair.claim, &pair.document, space, config)
}

/// Word vectors used to initialise the embedding table.
pub trait PretrainedEmbeddings {
    fn dim(&self) -> usize;
    fn vector(&self, word: &str) -> Option<&[f64]>;
}

/// Hidden layer + ReLU + output layer.
#[derive(Debug, Clone, PartialEq)]
struct Mlp {
    hidden_w: Parameter,
    hidden_b: Parameter,
    out_w: Parameter,
    out_b: Parameter,
}

#[derive(Debug, Clone)]
struct MlpCache {
    input: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

fn glorot(
    name: String,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Result<Parameter> {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Ok(Parameter::new(name, Tensor::from_vec(shape, data)?))
}

impl Mlp {
    fn new(prefix: &str, n_in: usize, hidden: usize, n_out: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Mlp {
            hidden_w: glorot(
                format!("{prefix}.hidden.weight"),
                &[n_in, hidden],
                n_in,
                hidden,
                rng,
            )?,
            hidden_b: Parameter::zeros(format!("{prefix}.hidden.bias"), &[hidden])?,
            out_w: glorot(
                format!("{prefix}.output.weight"),
                &[hidden, n_out],
                hidden,
                n_out,
                rng,
            )?,
            out_b: Parameter::zeros(format!("{prefix}.output.bias"), &[n_out])?,
        })
    }

    fn forward(&self, input: Tensor) -> Result<(Tensor, MlpCache)> {
        let pre = dense(&input, &self.hidden_w, &self.hidden_b)?;
        let hidden = relu(&pre);
        let logits = dense(&hidden, &self.out_w, &self.out_b)?;
        Ok((logits, MlpCache { input, pre, hidden }))
    }

    fn backward(&mut self, cache: &MlpCache, dlogits: &Tensor) -> Result<Tensor> {
        let dh = dense_backward(&cache.hidden, &mut self.out_w, &mut self.out_b, dlogits)?;
        let dpre = relu_backward(&cache.pre, &dh)?;
        dense_backward(&cache.input, &mut self.hidden_w, &mut self.hidden_b, &dpre)
    }

    fn params(&self) -> [&Parameter; 4] {
        [&self.hidden_w, &self.hidden_b, &self.out_w, &self.out_b]
    }

    fn params_mut(&mut self) -> [&mut Parameter; 4] {
        [
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBank {
    filters: Parameter,
    bias: Parameter,
}

/// Cached activations of one encoded id sequence.
#[derive(Debug, Clone)]
struct SequenceCache {
    embedded: Tensor,
    pools: Vec<ConvPool>,
}

#[derive(Debug, Clone)]
struct ExampleCache {
    claim: SequenceCache,
    doc: SequenceCache,
}

/// Activations of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub label_logits: Tensor,
    pub domain_logits: Option<Tensor>,
    /// `[batch, label_input_width]`.
    pub features: Tensor,
    label_cache: MlpCache,
    domain_cache: Option<MlpCache>,
    sequences: Vec<ExampleCache>,
}

/// A training batch: features plus class targets. Examples without a label
/// class (`None`) only take part in the domain loss.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a [FeatureBundle],
    pub labels: &'a [Option<usize>],
    pub domains: &'a [DomainTag],
}

/// Loss terms to backpropagate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub label: bool,
    pub domain: bool,
}

impl LossTerms {
    pub const BOTH: LossTerms = LossTerms {
        label: true,
        domain: true,
    };
    pub const LABEL: LossTerms = LossTerms {
        label: true,
        domain: false,
    };
    pub const DOMAIN: LossTerms = LossTerms {
        label: false,
        domain: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    /// Mean cross-entropy over labelled examples; `None` if there are none.
    pub label: Option<f64>,
    /// Mean cross-entropy of the domain classifier; `None` without a domain
    /// head or when not requested.
    pub domain: Option<f64>,
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub losses: Losses,
    /// Gradient of the backpropagated loss with respect to the feature
    /// vector, after gradient reversal.
    pub feature_grad: Tensor,
}

/// Parameter initialisation.
pub enum Init<'a> {
    /// All zeros; used before loading a checkpoint.
    Zeros,
    Random {
        seed: u64,
        pretrained: Option<&'a dyn PretrainedEmbeddings>,
    },
}

/// The full stance model: feature extractor, label head and optional
/// domain head.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceModel {
    config: ModelConfig,
    features: FeatureSpace,
    embedding: Option<Parameter>,
    claim_convs: Vec<ConvBank>,
    doc_convs: Vec<ConvBank>,
    label_head: Mlp,
    domain_head: Option<Mlp>,
    corrupt_backward: Option<String>,
}

impl StanceModel {
    /// Builds a model for `features`. The vocabulary sizes of the stored
    /// config are set to the fitted sizes.
    pub fn new(config: &ModelConfig, features: FeatureSpace, init: Init<'_>) -> Result<Self> {
        config.validate()?;
        let config = features.resolve(config);
        features.check(&config)?;
        let (seed, pretrained) = match init {
            Init::Zeros => (0, None),
            Init::Random { seed, pretrained } => (seed, pretrained),
        };
        let mut rng = rng::stream(seed, rng::INIT, 0);
        let dim = config.embed_dim;

        let mut embedding = None;
        let mut claim_convs = Vec::new();
        let mut doc_convs = Vec::new();
        if config.use_cnn {
            let rows = config.embed_vocab_size + 1;
            let mut table = Tensor::zeros(&[rows, dim])?;
            for r in 1..rows {
                for v in table.row_mut(r) {
                    *v = rng.gen_range(-EMBEDDING_INIT_RANGE..EMBEDDING_INIT_RANGE);
                }
            }
            if let (Some(pre), Some(vocab)) = (pretrained, &features.embed) {
                if pre.dim() != dim {
                    return Err(Error::Config {
                        key: "embed_dim".into(),
                        message: format!("pretrained vectors have dimension {}", pre.dim()),
                    });
                }
                for (i, term) in vocab.terms().iter().enumerate() {
                    if let Some(vec) = pre.vector(term) {
                        table.row_mut(i + 1).copy_from_slice(vec);
                    }
                }
            }
            embedding = Some(Parameter::new("embedding", table));
            for (side, banks) in [("claim", &mut claim_convs), ("doc", &mut doc_convs)] {
                for &w in &config.filter_widths {
                    let maps = config.maps_per_width;
                    banks.push(ConvBank {
                        filters: glorot(
                            format!("{side}_conv{w}.filters"),
                            &[w, dim, maps],
                            w * dim,
                            maps,
                            &mut rng,
                        )?,
                        bias: Parameter::zeros(format!("{side}_conv{w}.bias"), &[maps])?,
                    });
                }
            }
        }
        let label_head = Mlp::new(
            "label",
            config.label_input_width(),
            config.label_hidden,
            config.label_space.num_classes(),
            &mut rng,
        )?;
        let domain_head = if config.has_domain_head() {
            Some(Mlp::new(
                "domain",
                config.domain_input_width(),
                config.domain_hidden,
                2,
                &mut rng,
            )?)
        } else {
            None
        };
        let mut model = StanceModel {
            config,
            features,
            embedding,
            claim_convs,
            doc_convs,
            label_head,
            domain_head,
            corrupt_backward: None,
        };
        if matches!(init, Init::Zeros) {
            for p in model.parameters_mut() {
                p.value.fill(0.0);
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_space(&self) -> &FeatureSpace {
        &self.features
    }

    pub fn label_space(&self) -> LabelSpace {
        self.config.label_space
    }

    pub fn has_domain_head(&self) -> bool {
        self.domain_head.is_some()
    }

    pub fn extract(&self, claim: &str, document: &str) -> FeatureBundle {
        extract_text_features(claim, document, &self.features, &self.config)
    }

    /// Every parameter in a fixed order: embedding, claim convolutions,
    /// document convolutions, label head, domain head.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        out.extend(self.embedding.as_ref());
        for bank in self.claim_convs.iter().chain(&self.doc_convs) {
            out.push(&bank.filters);
            out.push(&bank.bias);
        }
        out.extend(self.label_head.params());
        if let Some(h) = &self.domain_head {
            out.extend(h.params());
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        out.extend(self.embedding.as_mut());
        for bank in self.claim_convs.iter_mut().chain(&mut self.doc_convs) {
            out.push(&mut bank.filters);
            out.push(&mut bank.bias);
        }
        out.extend(self.label_head.params_mut());
        if let Some(h) = &mut self.domain_head {
            out.extend(h.params_mut());
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Test hook: scales the gradients of every parameter whose name starts
    /// with `prefix` by 1.1 after each backward pass.
    pub fn corrupt_backward(&mut self, prefix: Option<&str>) {
        self.corrupt_backward = prefix.map(ToString::to_string);
    }

    fn check_bundle(&self, b: &FeatureBundle) -> Result<()> {
        let c = &self.config;
        let bad = |what: &str, expected: usize, found: usize| Error::Shape {
            context: "feature bundle",
            detail: format!("{what}: expected {expected} entries, found {found}"),
        };
        if b.bow.len() != c.bow_width() {
            return Err(bad("bow", c.bow_width(), b.bow.len()));
        }
        let (claim_len, doc_len) = if c.use_cnn {
            (c.claim_max_len, c.doc_max_len)
        } else {
            (0, 0)
        };
        if b.claim_ids.len() != claim_len {
            return Err(bad("claim_ids", claim_len, b.claim_ids.len()));
        }
        if b.doc_ids.len() != doc_len {
            return Err(bad("doc_ids", doc_len, b.doc_ids.len()));
        }
        Ok(())
    }

    fn encode_sequence(
        &self,
        ids: &[usize],
        banks: &[ConvBank],
        out: &mut [f64],
    ) -> Result<SequenceCache> {
        let table = self.embedding.as_ref().expect("cnn enabled");
        let mut embedded = embed_lookup(ids, table)?;
        // Padding positions read as zeros whatever the table holds.
        for (r, &id) in ids.iter().enumerate() {
            if id == PADDING_ID {
                embedded.row_mut(r).fill(0.0);
            }
        }
        let maps = self.config.maps_per_width;
        let mut pools = Vec::with_capacity(banks.len());
        for (bank, slot) in banks.iter().zip(out.chunks_mut(maps)) {
            let pool = conv1d_maxpool(&embedded, &bank.filters, &bank.bias)?;
            slot.copy_from_slice(pool.output.data());
            pools.push(pool);
        }
        Ok(SequenceCache { embedded, pools })
    }

    /// Columns of the domain-head input, as `(start, len)` ranges of the
    /// feature vector.
    fn da_ranges(&self) -> Vec<(usize, usize)> {
        let c = &self.config;
        let mut ranges = Vec::new();
        if c.da_features.bow {
            ranges.push((0, c.bow_width()));
        }
        if c.da_features.cnn {
            ranges.push((c.bow_width(), c.cnn_width()));
        }
        ranges
    }

    /// Forward pass. `lambda` is the gradient reversal constant; it does not
    /// change any output value.
    pub fn forward(&self, batch: &[FeatureBundle], lambda: f64) -> Result<ForwardPass> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let grl = GradientReversal::new(lambda)?;
        let c = &self.config;
        let width = c.label_input_width();
        let bow_width = c.bow_width();
        let half = c.cnn_width() / 2;
        let mut features = Tensor::zeros(&[batch.len(), width])?;
        let mut sequences = Vec::new();
        for (r, bundle) in batch.iter().enumerate() {
            self.check_bundle(bundle)?;
            let row = features.row_mut(r);
            row[..bow_width].copy_from_slice(&bundle.bow);
            if c.use_cnn {
                let (claim_out, doc_out) = row[bow_width..].split_at_mut(half);
                let claim =
                    self.encode_sequence(&bundle.claim_ids, &self.claim_convs, claim_out)?;
                let doc = self.encode_sequence(&bundle.doc_ids, &self.doc_convs, doc_out)?;
                sequences.push(ExampleCache { claim, doc });
            }
        }
        let (label_logits, label_cache) = self.label_head.forward(features.clone())?;
        let (domain_logits, domain_cache) = match &self.domain_head {
            Some(head) => {
                let ranges = self.da_ranges();
                let da_width: usize = ranges.iter().map(|r| r.1).sum();
                let mut da = Vec::with_capacity(batch.len() * da_width);
                for r in 0..batch.len() {
                    let row = features.row(r);
                    for &(start, len) in &ranges {
                        da.extend_from_slice(&row[start..start + len]);
                    }
                }
                let da = grl.forward(&Tensor::from_vec(&[batch.len(), da_width], da)?);
                let (logits, cache) = head.forward(da)?;
                (Some(logits), Some(cache))
            }
            None => (None, None),
        };
        Ok(ForwardPass {
            label_logits,
            domain_logits,
            features,
            label_cache,
            domain_cache,
            sequences,
        })
    }

    fn check_targets(&self, batch: &Batch<'_>) -> Result<()> {
        let n = batch.features.len();
        for len in [batch.labels.len(), batch.domains.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(())
    }

    /// Label loss over labelled rows: `(loss, dlogits)`; dlogits is zero on
    /// unlabelled rows.
    fn label_loss(
        &self,
        logits: &Tensor,
        labels: &[Option<usize>],
    ) -> Result<Option<(f64, Tensor)>> {
        let rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r].is_some()).collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let k = self.config.label_space.num_classes();
        let mut sub = Vec::with_capacity(rows.len() * k);
        for &r in &rows {
            sub.extend_from_slice(logits.row(r));
        }
        let sub = Tensor::from_vec(&[rows.len(), k], sub)?;
        let targets: Vec<usize> = rows.iter().map(|&r| labels[r].unwrap()).collect();
        let (loss, probs) = softmax_cross_entropy(&sub, &targets)?;
        let dsub = softmax_cross_entropy_backward(&probs, &targets)?;
        let mut d = Tensor::zeros(logits.shape())?;
        for (i, &r) in rows.iter().enumerate() {
            d.row_mut(r).copy_from_slice(dsub.row(i));
        }
        Ok(Some((loss, d)))
    }

    fn domain_loss(&self, logits: &Tensor, domains: &[DomainTag]) -> Result<(f64, Tensor)> {
        let targets: Vec<usize> = domains.iter().map(|d| d.index()).collect();
        let (loss, probs) = softmax_cross_entropy(logits, &targets)?;
        Ok((loss, softmax_cross_entropy_backward(&probs, &targets)?))
    }

    /// Forward-only losses.
    pub fn loss(&self, batch: &Batch<'_>, lambda: f64) -> Result<Losses> {
        self.check_targets(batch)?;
        if self.domain_head.is_none() && lambda > 0.0 {
            return Err(Error::MissingDomainHead(lambda));
        }
        let pass = self.forward(batch.features, lambda)?;
        let label = self
            .label_loss(&pass.label_logits, batch.labels)?
            .map(|(l, _)| l);
        let domain = match &pass.domain_logits {
            Some(logits) => Some(self.domain_loss(logits, batch.domains)?.0),
            None => None,
        };
        Ok(Losses { label, domain })
    }

    /// Forward and backward pass, accumulating into the parameter
    /// gradients. The total backpropagated loss is the sum of the requested
    /// terms; gradient reversal makes the feature extractor ascend the
    /// domain loss while the domain head descends it.
    pub fn backward(
        &mut self,
        batch: &Batch<'_>,
        lambda: f64,
        terms: LossTerms,
    ) -> Result<Backward> {
        self.check_targets(batch)?;
        if self.domain_head.is_none() && lambda > 0.0 {
            return Err(Error::MissingDomainHead(lambda));
        }
        let grl = GradientReversal::new(lambda)?;
        let pass = self.forward(batch.features, lambda)?;
        let n = batch.features.len();
        let mut losses = Losses {
            label: None,
            domain: None,
        };

        let mut feature_grad = Tensor::zeros(pass.features.shape())?;
        if terms.label {
            if let Some((loss, dlogits)) = self.label_loss(&pass.label_logits, batch.labels)? {
                losses.label = Some(loss);
                feature_grad = self.label_head.backward(&pass.label_cache, &dlogits)?;
            }
        }
        if terms.domain {
            if let (Some(logits), Some(cache)) = (&pass.domain_logits, &pass.domain_cache) {
                let (loss, dlogits) = self.domain_loss(logits, batch.domains)?;
                losses.domain = Some(loss);
                let ranges = self.da_ranges();
                let head = self.domain_head.as_mut().expect("domain head");
                let mut dda = head.backward(cache, &dlogits)?;
                grl.backward_in_place(dda.data_mut());
                for r in 0..n {
                    let src = dda.row(r);
                    let dst = feature_grad.row_mut(r);
                    let mut offset = 0;
                    for &(start, len) in &ranges {
                        for (d, s) in dst[start..start + len]
                            .iter_mut()
                            .zip(&src[offset..offset + len])
                        {
                            *d += s;
                        }
                        offset += len;
                    }
                }
            }
        }

        if self.config.use_cnn {
            let bow_width = self.config.bow_width();
            let half = self.config.cnn_width() / 2;
            let maps = self.config.maps_per_width;
            for (r, cache) in pass.sequences.iter().enumerate() {
                let g = &feature_grad.row(r)[bow_width..];
                if g.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let (g_claim, g_doc) = g.split_at(half);
                let bundle = &batch.features[r];
                for (ids, seq, g, side) in [
                    (&bundle.claim_ids, &cache.claim, g_claim, 0),
                    (&bundle.doc_ids, &cache.doc, g_doc, 1),
                ] {
                    let banks = if side == 0 {
                        &mut self.claim_convs
                    } else {
                        &mut self.doc_convs
                    };
                    let mut dx = Tensor::zeros(seq.embedded.shape())?;
                    for ((bank, pool), gm) in banks.iter_mut().zip(&seq.pools).zip(g.chunks(maps)) {
                        let d = conv1d_maxpool_backward(
                            &seq.embedded,
                            &mut bank.filters,
                            &mut bank.bias,
                            pool,
                            gm,
                        )?;
                        for (a, b) in dx.data_mut().iter_mut().zip(d.data()) {
                            *a += b;
                        }
                    }
                    if self.config.train_embeddings {
                        embed_backward(ids, self.embedding.as_mut().expect("cnn enabled"), &dx)?;
                    }
                }
            }
            // The padding row stays at zero.
            if let Some(e) = &mut self.embedding {
                e.grad.row_mut(PADDING_ID).fill(0.0);
            }
        }

        if let Some(prefix) = self.corrupt_backward.clone() {
            for p in self.parameters_mut() {
                if p.name.starts_with(&prefix) {
                    for g in p.grad.data_mut() {
                        *g *= 1.1;
                    }
                }
            }
        }
        Ok(Backward {
            losses,
            feature_grad,
        })
    }

    /// Rows of the feature vector restricted to the `kinds` blocks, in
    /// layout order.
    pub fn feature_rows(
        &self,
        bundles: &[FeatureBundle],
        kinds: FeatureKinds,
    ) -> Result<Vec<Vec<f64>>> {
        let c = &self.config;
        if !kinds.is_subset_of(c.features()) || kinds.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "feature blocks `{}` not present in a `{}` model",
                kinds.render(),
                c.features().render()
            )));
        }
        let mut ranges = Vec::new();
        if kinds.bow {
            ranges.push(0..c.bow_width());
        }
        if kinds.cnn {
            ranges.push(c.bow_width()..c.label_input_width());
        }
        let mut out = Vec::with_capacity(bundles.len());
        for chunk in bundles.chunks(256) {
            let pass = self.forward(chunk, 0.0)?;
            for r in 0..chunk.len() {
                let row = pass.features.row(r);
                out.push(
                    ranges
                        .iter()
                        .flat_map(|x| row[x.clone()].iter().copied())
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Argmax class per example; ties go to the lowest class index.
    pub fn predict_classes(&self, bundles: &[FeatureBundle]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(bundles.len());
        for chunk in bundles.chunks(256) {
            let pass = self.forward(chunk, 0.0)?;
            for r in 0..chunk.len() {
                out.push(argmax(pass.label_logits.row(r)));
            }
        }
        Ok(out)
    }

    /// Stance predictions. Not available for the related/unrelated space;
    /// use [`StanceModel::predict_relatedness`] there.
    pub fn predict(&self, bundles: &[FeatureBundle]) -> Result<Vec<StanceLabel>> {
        let space = self.config.label_space;
        if space == LabelSpace::Relatedness {
            return Err(Error::InvalidArgument(
                "related/unrelated model: use predict_relatedness".into(),
            ));
        }
        Ok(self
            .predict_classes(bundles)?
            .into_iter()
            .map(|c| space.stance(c).expect("stance class"))
            .collect())
    }

    pub fn predict_relatedness(&self, bundles: &[FeatureBundle]) -> Result<Vec<Relatedness>> {
        if self.config.label_space != LabelSpace::Relatedness {
            return Err(Error::InvalidArgument(format!(
                "model predicts the {} label space",
                self.config.label_space.key()
            )));
        }
        Ok(self
            .predict_classes(bundles)?
            .into_iter()
            .map(|c| Relatedness::ALL[c])
            .collect())
    }
}

/// The training loss of one fixed batch, as a gradient-check target.
///
/// The analytic gradient is what [`StanceModel::backward`] accumulates for
/// both loss terms. Parameters of the domain head follow
/// `label + domain`; everything upstream of the gradient reversal follows
/// `label - lambda * domain`.
pub struct ModelObjective {
    pub model: StanceModel,
    pub features: Vec<FeatureBundle>,
    pub labels: Vec<Option<usize>>,
    pub domains: Vec<DomainTag>,
    pub lambda: f64,
}

impl ModelObjective {
    fn batch(&self) -> Batch<'_> {
        Batch {
            features: &self.features,
            labels: &self.labels,
            domains: &self.domains,
        }
    }

    pub fn losses(&self) -> Result<Losses> {
        self.model.loss(&self.batch(), self.lambda)
    }

    /// Zeroes gradients and backpropagates only `terms`.
    pub fn gradient_of(&mut self, terms: LossTerms) -> Result<Losses> {
        self.model.zero_grad();
        let batch = Batch {
            features: &self.features,
            labels: &self.labels,
            domains: &self.domains,
        };
        Ok(self.model.backward(&batch, self.lambda, terms)?.losses)
    }
}

impl Objective for ModelObjective {
    fn parameters(&mut self) -> Vec<&mut Parameter> {
        self.model.parameters_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let l = self.losses()?;
        Ok(l.label.unwrap_or(0.0) + l.domain.unwrap_or(0.0))
    }

    fn loss_seen_by(&mut self, param: usize) -> Result<f64> {
        let l = self.losses()?;
        let in_head = self.model.parameters()[param]
            .name
            .starts_with(DOMAIN_PREFIX);
        let weight = if in_head { 1.0 } else { -self.lambda };
        Ok(l.label.unwrap_or(0.0) + weight * l.domain.unwrap_or(0.0))
    }

    fn gradient(&mut self) -> Result<f64> {
        let l = self.gradient_of(LossTerms::BOTH)?;
        Ok(l.label.unwrap_or(0.0) + l.domain.unwrap_or(0.0))
    }
}

/// Texts of the gradient-check instance.
const CHECK_TEXTS: [(&str, &str); 4] = [
    ("a b", "a b c d e f a"),
    ("c e f", "d d b"),
    ("f a d", "e e c a b"),
    ("b", "f c a d"),
];

/// A small instance of `config`'s architecture for finite-difference
/// checks: same feature blocks, filter widths, adapted blocks and label
/// space, with tiny dimensions, a six-word vocabulary and a four-example
/// batch mixing both domains and one unlabeled row. Biases are moved off
/// zero so no ReLU sits on its kink.
pub fn gradcheck_instance(config: &ModelConfig, lambda: f64, seed: u64) -> Result<ModelObjective> {
    let widest = config.filter_widths.iter().copied().max().unwrap_or(1);
    let small = ModelConfig {
        embed_dim: 4,
        maps_per_width: 3,
        claim_max_len: widest.max(5),
        doc_max_len: (widest + 1).max(7),
        label_hidden: 5,
        domain_hidden: 4,
        ..config.clone()
    };
    let vocab =
        |terms: &[&str]| Vocabulary::from_counts(terms.iter().map(|t| (t.to_string(), 1)), 1);
    let space = FeatureSpace {
        bow: if small.use_bow {
            Some(vocab(&["a", "b", "c", "d"])?)
        } else {
            None
        },
        embed: if small.use_cnn {
            Some(vocab(&["a", "b", "c", "d", "e", "f"])?)
        } else {
            None
        },
    };
    let mut model = StanceModel::new(
        &small,
        space,
        Init::Random {
            seed,
            pretrained: None,
        },
    )?;
    let mut r = rng::stream(seed, rng::GRADCHECK, 0);
    for p in model.parameters_mut() {
        if p.name.ends_with("bias") {
            for v in p.value.data_mut() {
                *v = r.gen_range(0.05..0.3);
            }
        }
    }
    let k = small.label_space.num_classes();
    let features = CHECK_TEXTS
        .iter()
        .map(|(c, d)| model.extract(c, d))
        .collect();
    Ok(ModelObjective {
        model,
        features,
        labels: vec![Some(0), None, Some(2 % k), Some(1 % k)],
        domains: vec![
            DomainTag::Source,
            DomainTag::Target,
            DomainTag::Source,
            DomainTag::Target,
        ],
        lambda,
    })
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
