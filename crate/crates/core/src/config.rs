//! Model, training and hierarchy configuration, and the flat `key = value`
//! text format they share with config files and checkpoints.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown and duplicate keys are errors.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use crate::data::{Relatedness, StanceLabel};
use crate::nn::AdamConfig;
use crate::{Error, Result};

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(
            key,
            format!("expected true/false, got `{value}`"),
        )),
    }
}

/// The classes a model predicts, in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    /// agree, disagree, discuss, unrelated
    Stance,
    /// related, unrelated
    Relatedness,
    /// agree, disagree, discuss
    RelatedStance,
    /// agree, disagree
    Polarity,
}

impl LabelSpace {
    pub fn key(self) -> &'static str {
        match self {
            LabelSpace::Stance => "stance4",
            LabelSpace::Relatedness => "relatedness",
            LabelSpace::RelatedStance => "related3",
            LabelSpace::Polarity => "polarity",
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            LabelSpace::Stance => &["agree", "disagree", "discuss", "unrelated"],
            LabelSpace::Relatedness => &["related", "unrelated"],
            LabelSpace::RelatedStance => &["agree", "disagree", "discuss"],
            LabelSpace::Polarity => &["agree", "disagree"],
        }
    }

    /// Class index of a gold stance, or `None` if the space cannot express
    /// it (e.g. `unrelated` in the 3-way space).
    pub fn class_of(self, label: StanceLabel) -> Option<usize> {
        match self {
            LabelSpace::Relatedness => Some(match label.relatedness() {
                Relatedness::Related => 0,
                Relatedness::Unrelated => 1,
            }),
            _ => self
                .class_names()
                .iter()
                .position(|&name| name == label.as_str()),
        }
    }

    /// Stance for a class index; `None` for the `related` class.
    pub fn stance(self, class: usize) -> Option<StanceLabel> {
        let name = *self.class_names().get(class)?;
        name.parse().ok()
    }

    pub fn class_order(self) -> String {
        self.class_names().join(",")
    }
}

impl FromStr for LabelSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            LabelSpace::Stance,
            LabelSpace::Relatedness,
            LabelSpace::RelatedStance,
            LabelSpace::Polarity,
        ]
        .into_iter()
        .find(|l| l.key() == s)
        .ok_or_else(|| config_err("label_space", format!("unknown label space `{s}`")))
    }
}

/// A subset of the two feature kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureKinds {
    pub bow: bool,
    pub cnn: bool,
}

impl FeatureKinds {
    pub const NONE: FeatureKinds = FeatureKinds {
        bow: false,
        cnn: false,
    };
    pub const BOW: FeatureKinds = FeatureKinds {
        bow: true,
        cnn: false,
    };
    pub const CNN: FeatureKinds = FeatureKinds {
        bow: false,
        cnn: true,
    };
    pub const BOTH: FeatureKinds = FeatureKinds {
        bow: true,
        cnn: true,
    };

    pub fn is_empty(self) -> bool {
        !self.bow && !self.cnn
    }

    pub fn is_subset_of(self, other: FeatureKinds) -> bool {
        (!self.bow || other.bow) && (!self.cnn || other.cnn)
    }

    pub fn render(self) -> &'static str {
        match (self.bow, self.cnn) {
            (false, false) => "none",
            (true, false) => "bow",
            (false, true) => "cnn",
            (true, true) => "bow,cnn",
        }
    }

    fn parse(key: &str, value: &str) -> Result<Self> {
        let mut kinds = FeatureKinds::NONE;
        if value == "none" || value.is_empty() {
            return Ok(kinds);
        }
        for part in value.split([',', '+']).map(str::trim) {
            match part {
                "bow" => kinds.bow = true,
                "cnn" => kinds.cnn = true,
                _ => return Err(config_err(key, format!("unknown feature kind `{part}`"))),
            }
        }
        Ok(kinds)
    }
}

/// Architecture of a [`StanceModel`](crate::model::StanceModel).
///
/// `bow_vocab_size` and `embed_vocab_size` are upper bounds when fitting
/// vocabularies; in a built model they hold the exact fitted sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub use_bow: bool,
    pub use_cnn: bool,
    /// Feature blocks routed through gradient reversal into the domain
    /// classifier. Empty means no domain adaptation.
    pub da_features: FeatureKinds,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub maps_per_width: usize,
    pub claim_max_len: usize,
    pub doc_max_len: usize,
    pub label_hidden: usize,
    pub domain_hidden: usize,
    pub label_space: LabelSpace,
    pub bow_vocab_size: usize,
    pub embed_vocab_size: usize,
    /// Fit the BOW vocabulary on source text as well as target text.
    pub bow_include_source: bool,
    /// Source examples contribute to the label loss.
    pub source_in_label_loss: bool,
    pub train_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            use_bow: true,
            use_cnn: true,
            da_features: FeatureKinds::CNN,
            embed_dim: 300,
            filter_widths: vec![2, 3, 4],
            maps_per_width: 128,
            claim_max_len: 50,
            doc_max_len: 500,
            label_hidden: 100,
            domain_hidden: 100,
            label_space: LabelSpace::Stance,
            bow_vocab_size: crate::textprep::DEFAULT_MAX_TERMS,
            embed_vocab_size: 50_000,
            bow_include_source: false,
            source_in_label_loss: true,
            train_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn features(&self) -> FeatureKinds {
        FeatureKinds {
            bow: self.use_bow,
            cnn: self.use_cnn,
        }
    }

    pub fn has_domain_head(&self) -> bool {
        !self.da_features.is_empty()
    }

    /// `2 |vocab| + 1` when BOW is enabled.
    pub fn bow_width(&self) -> usize {
        if self.use_bow {
            2 * self.bow_vocab_size + 1
        } else {
            0
        }
    }

    /// Claim and document encodings, `maps_per_width` per filter width each.
    pub fn cnn_width(&self) -> usize {
        if self.use_cnn {
            2 * self.filter_widths.len() * self.maps_per_width
        } else {
            0
        }
    }

    pub fn label_input_width(&self) -> usize {
        self.bow_width() + self.cnn_width()
    }

    pub fn domain_input_width(&self) -> usize {
        let mut w = 0;
        if self.da_features.bow {
            w += self.bow_width();
        }
        if self.da_features.cnn {
            w += self.cnn_width();
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_bow && !self.use_cnn {
            return Err(config_err(
                "use_bow",
                "at least one of use_bow/use_cnn must be set",
            ));
        }
        if !self.da_features.is_subset_of(self.features()) {
            return Err(config_err(
                "da_features",
                "domain adaptation features must be enabled feature kinds",
            ));
        }
        let positive = [
            ("embed_dim", self.embed_dim),
            ("maps_per_width", self.maps_per_width),
            ("claim_max_len", self.claim_max_len),
            ("doc_max_len", self.doc_max_len),
            ("label_hidden", self.label_hidden),
            ("domain_hidden", self.domain_hidden),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(config_err(key, "must be positive"));
            }
        }
        if self.use_cnn && (self.filter_widths.is_empty() || self.filter_widths.contains(&0)) {
            return Err(config_err(
                "filter_widths",
                "need one or more positive widths",
            ));
        }
        Ok(())
    }

    /// Applies one key; `Ok(false)` if the key is not a model key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "use_bow" => self.use_bow = parse_bool(key, value)?,
            "use_cnn" => self.use_cnn = parse_bool(key, value)?,
            "da_features" => self.da_features = FeatureKinds::parse(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "filter_widths" => {
                self.filter_widths = value
                    .split(',')
                    .map(|w| parse_value(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "maps_per_width" => self.maps_per_width = parse_value(key, value)?,
            "claim_max_len" => self.claim_max_len = parse_value(key, value)?,
            "doc_max_len" => self.doc_max_len = parse_value(key, value)?,
            "label_hidden" => self.label_hidden = parse_value(key, value)?,
            "domain_hidden" => self.domain_hidden = parse_value(key, value)?,
            "label_space" => self.label_space = value.parse()?,
            "bow_vocab_size" => self.bow_vocab_size = parse_value(key, value)?,
            "embed_vocab_size" => self.embed_vocab_size = parse_value(key, value)?,
            "bow_include_source" => self.bow_include_source = parse_bool(key, value)?,
            "source_in_label_loss" => self.source_in_label_loss = parse_bool(key, value)?,
            "train_embeddings" => self.train_embeddings = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn write_keys(&self, out: &mut String) {
        let widths: Vec<String> = self.filter_widths.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "use_bow = {}", self.use_bow);
        let _ = writeln!(out, "use_cnn = {}", self.use_cnn);
        let _ = writeln!(out, "da_features = {}", self.da_features.render());
        let _ = writeln!(out, "embed_dim = {}", self.embed_dim);
        let _ = writeln!(out, "filter_widths = {}", widths.join(","));
        let _ = writeln!(out, "maps_per_width = {}", self.maps_per_width);
        let _ = writeln!(out, "claim_max_len = {}", self.claim_max_len);
        let _ = writeln!(out, "doc_max_len = {}", self.doc_max_len);
        let _ = writeln!(out, "label_hidden = {}", self.label_hidden);
        let _ = writeln!(out, "domain_hidden = {}", self.domain_hidden);
        let _ = writeln!(out, "label_space = {}", self.label_space.key());
        let _ = writeln!(out, "bow_vocab_size = {}", self.bow_vocab_size);
        let _ = writeln!(out, "embed_vocab_size = {}", self.embed_vocab_size);
        let _ = writeln!(out, "bow_include_source = {}", self.bow_include_source);
        let _ = writeln!(out, "source_in_label_loss = {}", self.source_in_label_loss);
        let _ = writeln!(out, "train_embeddings = {}", self.train_embeddings);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_keys(&mut s);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = ModelConfig::default();
        for (key, value) in entries(text)? {
            if !config.apply(key, value)? {
                return Err(config_err(key, "unknown key"));
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// Which validation loss picks the best of several runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionLoss {
    Label,
    Domain,
    Sum,
}

impl SelectionLoss {
    fn key(self) -> &'static str {
        match self {
            SelectionLoss::Label => "label",
            SelectionLoss::Domain => "domain",
            SelectionLoss::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lambda_max: f64,
    pub ramp_gamma: f64,
    pub seed: u64,
    pub runs: usize,
    pub validation_fraction: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Learning-rate multiplier for the domain classifier.
    pub domain_lr_scale: f64,
    pub selection_loss: SelectionLoss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            lambda_max: 1.0,
            ramp_gamma: 10.0,
            seed: 0,
            runs: 5,
            validation_fraction: 0.2,
            grad_clip: None,
            domain_lr_scale: 1.0,
            selection_loss: SelectionLoss::Label,
        }
    }
}

/// False for NaN.
fn positive(x: f64) -> bool {
    x > 0.0
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be positive"));
        }
        if self.runs == 0 {
            return Err(config_err("runs", "must be positive"));
        }
        if self.lambda_max.is_nan() || self.lambda_max < 0.0 {
            return Err(config_err("lambda_max", "must be non-negative"));
        }
        if !positive(self.ramp_gamma) {
            return Err(config_err("ramp_gamma", "must be positive"));
        }
        if !positive(self.adam.learning_rate) {
            return Err(config_err("learning_rate", "must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(config_err("validation_fraction", "must lie in (0, 1)"));
        }
        if !positive(self.domain_lr_scale) {
            return Err(config_err("domain_lr_scale", "must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !positive(c) {
                return Err(config_err("grad_clip", "must be positive or `none`"));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.adam.learning_rate = parse_value(key, value)?,
            "beta1" => self.adam.beta1 = parse_value(key, value)?,
            "beta2" => self.adam.beta2 = parse_value(key, value)?,
            "adam_epsilon" => self.adam.epsilon = parse_value(key, value)?,
            "lambda_max" => self.lambda_max = parse_value(key, value)?,
            "ramp_gamma" => self.ramp_gamma = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "runs" => self.runs = parse_value(key, value)?,
            "validation_fraction" => self.validation_fraction = parse_value(key, value)?,
            "grad_clip" => {
                self.grad_clip = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "domain_lr_scale" => self.domain_lr_scale = parse_value(key, value)?,
            "selection_loss" => {
                self.selection_loss = match value {
                    "label" => SelectionLoss::Label,
                    "domain" => SelectionLoss::Domain,
                    "sum" => SelectionLoss::Sum,
                    _ => return Err(config_err(key, format!("unknown selection `{value}`"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn write_keys(&self, out: &mut String) {
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "learning_rate = {:?}", self.adam.learning_rate);
        let _ = writeln!(out, "beta1 = {:?}", self.adam.beta1);
        let _ = writeln!(out, "beta2 = {:?}", self.adam.beta2);
        let _ = writeln!(out, "adam_epsilon = {:?}", self.adam.epsilon);
        let _ = writeln!(out, "lambda_max = {:?}", self.lambda_max);
        let _ = writeln!(out, "ramp_gamma = {:?}", self.ramp_gamma);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "runs = {}", self.runs);
        let _ = writeln!(out, "validation_fraction = {:?}", self.validation_fraction);
        match self.grad_clip {
            Some(c) => {
                let _ = writeln!(out, "grad_clip = {c:?}");
            }
            None => {
                let _ = writeln!(out, "grad_clip = none");
            }
        }
        let _ = writeln!(out, "domain_lr_scale = {:?}", self.domain_lr_scale);
        let _ = writeln!(out, "selection_loss = {}", self.selection_loss.key());
    }
}

/// How stage 2 of the hierarchy picks its target training examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2Routing {
    /// Gold-related target examples.
    Gold,
    /// Target examples stage 1 predicts related (and whose gold label is
    /// related, since stage 2 needs a 3-way label).
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub enabled: bool,
    pub stage1_features: FeatureKinds,
    pub stage2_routing: Stage2Routing,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            enabled: false,
            stage1_features: FeatureKinds::BOW,
            stage2_routing: Stage2Routing::Gold,
        }
    }
}

impl HierarchyConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "hierarchy" => self.enabled = parse_bool(key, value)?,
            "stage1_features" => {
                let kinds = FeatureKinds::parse(key, value)?;
                if kinds.is_empty() {
                    return Err(config_err(key, "stage 1 needs at least one feature kind"));
                }
                self.stage1_features = kinds;
            }
            "stage2_routing" => {
                self.stage2_routing = match value {
                    "gold" => Stage2Routing::Gold,
                    "predicted" => Stage2Routing::Predicted,
                    _ => return Err(config_err(key, format!("unknown routing `{value}`"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn write_keys(&self, out: &mut String) {
        let _ = writeln!(out, "hierarchy = {}", self.enabled);
        let _ = writeln!(out, "stage1_features = {}", self.stage1_features.render());
        let routing = match self.stage2_routing {
            Stage2Routing::Gold => "gold",
            Stage2Routing::Predicted => "predicted",
        };
        let _ = writeln!(out, "stage2_routing = {routing}");
    }
}

/// Everything a training invocation is configured by.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub hierarchy: HierarchyConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (key, value) in entries(text)? {
            let known = config.model.apply(key, value)?
                || config.train.apply(key, value)?
                || config.hierarchy.apply(key, value)?;
            if !known {
                return Err(config_err(key, "unknown key"));
            }
        }
        config.model.validate()?;
        config.train.validate()?;
        Ok(config)
    }

    /// Every key with its resolved value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.model.write_keys(&mut out);
        self.train.write_keys(&mut out);
        self.hierarchy.write_keys(&mut out);
        out
    }
}

/// Splits config text into `(key, value)` pairs, rejecting duplicates.
pub fn entries(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key) {
            return Err(config_err(key, "duplicate key"));
        }
        out.push((key, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_architecture() {
        let m = ModelConfig::default();
        assert_eq!(m.embed_dim, 300);
        assert_eq!(m.filter_widths, vec![2, 3, 4]);
        assert_eq!(m.maps_per_width, 128);
        assert_eq!((m.claim_max_len, m.doc_max_len), (50, 500));
        assert_eq!(m.bow_width(), 10001);
        assert_eq!(m.cnn_width(), 768);
        assert_eq!(m.label_input_width(), 10001 + 768);
        assert_eq!(m.domain_input_width(), 768);
        let t = TrainConfig::default();
        assert_eq!((t.epochs, t.batch_size, t.runs), (50, 64, 5));
        assert_eq!(t.adam.learning_rate, 1e-3);
    }

    #[test]
    fn run_config_round_trips() {
        let mut c = RunConfig::default();
        c.model.da_features = FeatureKinds::BOTH;
        c.model.filter_widths = vec![3, 5];
        c.train.grad_clip = Some(5.0);
        c.train.selection_loss = SelectionLoss::Sum;
        c.hierarchy.enabled = true;
        c.hierarchy.stage2_routing = Stage2Routing::Predicted;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_handles_comments_and_reports_keys() {
        let c = RunConfig::parse(
            "# header\nepochs = 3 # short\n\nuse_cnn = false\nda_features = none\n",
        )
        .unwrap();
        assert_eq!(c.train.epochs, 3);
        assert!(!c.model.use_cnn);

        let err = RunConfig::parse("epochz = 3\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "epochz"));
        let err = RunConfig::parse("epochs = 3\nepochs = 4\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "epochs"));
        let err = RunConfig::parse("batch_size = many\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "batch_size"));
    }

    #[test]
    fn validation_rejects_inconsistent_models() {
        let err = RunConfig::parse("use_cnn = false\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "da_features"));
        assert!(RunConfig::parse("use_bow = false\nuse_cnn = false\nda_features = none").is_err());
        assert!(RunConfig::parse("lambda_max = -1").is_err());
    }

    #[test]
    fn label_spaces() {
        assert_eq!(LabelSpace::Stance.class_of(StanceLabel::Discuss), Some(2));
        assert_eq!(
            LabelSpace::Relatedness.class_of(StanceLabel::Discuss),
            Some(0)
        );
        assert_eq!(
            LabelSpace::Relatedness.class_of(StanceLabel::Unrelated),
            Some(1)
        );
        assert_eq!(
            LabelSpace::RelatedStance.class_of(StanceLabel::Unrelated),
            None
        );
        assert_eq!(LabelSpace::Polarity.class_of(StanceLabel::Discuss), None);
        assert_eq!(LabelSpace::Relatedness.stance(0), None);
        assert_eq!(LabelSpace::Stance.stance(3), Some(StanceLabel::Unrelated));
        assert_eq!(
            LabelSpace::Stance.class_order(),
            "agree,disagree,discuss,unrelated"
        );
    }
}
