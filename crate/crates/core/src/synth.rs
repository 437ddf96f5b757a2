//! Synthetic two-domain polarity task for checking domain adaptation end to
//! end.
//!
//! Documents in both domains carry noisy polarity words from shared pools.
//! The rest of every document comes from its domain's own vocabulary: a
//! repeated marker word and style words drawn from a large pool, plus
//! shared filler when documents are long enough. The two domains therefore
//! differ by a systematic vocabulary shift that carries no label
//! information but lets a model memorise the few target examples.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::config::{FeatureKinds, LabelSpace, ModelConfig, TrainConfig};
use crate::data::{DomainTag, LabeledPair, StanceLabel};
use crate::metrics::macro_f1;
use crate::model::StanceModel;
use crate::nn::{
    dense, dense_backward, relu, relu_backward, softmax_cross_entropy,
    softmax_cross_entropy_backward, Adam, AdamConfig, Parameter, Tensor,
};
use crate::rng::{self, Rng};
use crate::trainer::{train_run, TrainSetup, TrainingHistory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub source_size: usize,
    pub target_size: usize,
    /// Held-out target examples for macro-F1.
    pub test_size: usize,
    /// Examples per domain for the domain probe.
    pub probe_size: usize,
    pub claim_len: usize,
    pub topic_words: usize,
    pub doc_len: usize,
    pub filler_words: usize,
    pub style_words: usize,
    /// Style words per document.
    pub style_per_doc: usize,
    /// Copies of the domain's single marker word per document.
    pub marker_per_doc: usize,
    /// Words in each polarity pool.
    pub polarity_words: usize,
    /// Polarity words per document.
    pub polarity_per_doc: usize,
    /// Chance that a polarity word agrees with the label.
    pub polarity_purity: f64,
    /// Chance that a polarity word comes from the domain's own pool rather
    /// than the shared one.
    pub domain_polarity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            source_size: 2000,
            target_size: 100,
            test_size: 1000,
            probe_size: 400,
            claim_len: 4,
            topic_words: 3,
            doc_len: 12,
            filler_words: 10,
            style_words: 40,
            style_per_doc: 8,
            marker_per_doc: 2,
            polarity_words: 20,
            polarity_per_doc: 2,
            polarity_purity: 0.85,
            domain_polarity: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub source: Vec<LabeledPair>,
    pub target: Vec<LabeledPair>,
    pub target_test: Vec<LabeledPair>,
    /// `probe_size` examples of each domain, interleaved.
    pub probe: Vec<LabeledPair>,
}

fn polarity_label(positive: bool) -> StanceLabel {
    if positive {
        StanceLabel::Agree
    } else {
        StanceLabel::Disagree
    }
}

fn example(cfg: &SynthConfig, domain: DomainTag, id: String, rng: &mut Rng) -> LabeledPair {
    let positive = rng.gen_bool(0.5);
    let pick = |rng: &mut Rng, n: usize| rng.gen_range(0..n);
    let claim: Vec<String> = (0..cfg.claim_len)
        .map(|_| format!("topic{}", pick(rng, cfg.topic_words)))
        .collect();
    let style = match domain {
        DomainTag::Source => "s",
        DomainTag::Target => "t",
    };
    let mut doc: Vec<String> = Vec::with_capacity(cfg.doc_len);
    for _ in 0..cfg.style_per_doc {
        doc.push(format!("{style}style{}", pick(rng, cfg.style_words)));
    }
    for _ in 0..cfg.marker_per_doc {
        doc.push(format!("{style}marker"));
    }
    for _ in 0..cfg.polarity_per_doc {
        let agrees = rng.gen_bool(cfg.polarity_purity);
        let word = if positive == agrees { "up" } else { "down" };
        let pool = if rng.gen_bool(cfg.domain_polarity) {
            style
        } else {
            ""
        };
        doc.push(format!("{pool}{word}{}", pick(rng, cfg.polarity_words)));
    }
    while doc.len() < cfg.doc_len {
        doc.push(format!("w{}", pick(rng, cfg.filler_words)));
    }
    doc.shuffle(rng);
    LabeledPair::new(
        id,
        claim.join(" "),
        doc.join(" "),
        polarity_label(positive),
        domain,
    )
}

/// Draws a benchmark instance; fully determined by `seed`.
pub fn generate(cfg: &SynthConfig, seed: u64) -> SynthData {
    let mut rng = rng::stream(seed, rng::SYNTH, 0);
    let draw = |domain: DomainTag, prefix: &str, n: usize, rng: &mut Rng| -> Vec<LabeledPair> {
        (0..n)
            .map(|i| example(cfg, domain, format!("{prefix}{i}"), rng))
            .collect()
    };
    let source = draw(DomainTag::Source, "s", cfg.source_size, &mut rng);
    let target = draw(DomainTag::Target, "t", cfg.target_size, &mut rng);
    let target_test = draw(DomainTag::Target, "tt", cfg.test_size, &mut rng);
    let ps = draw(DomainTag::Source, "ps", cfg.probe_size, &mut rng);
    let pt = draw(DomainTag::Target, "pt", cfg.probe_size, &mut rng);
    let probe = ps.into_iter().zip(pt).flat_map(|(a, b)| [a, b]).collect();
    SynthData {
        source,
        target,
        target_test,
        probe,
    }
}

/// CNN model used by the benchmark; `adapted` adds the domain head on the
/// CNN features.
pub fn bench_model_config(adapted: bool) -> ModelConfig {
    ModelConfig {
        use_bow: false,
        use_cnn: true,
        da_features: if adapted {
            FeatureKinds::CNN
        } else {
            FeatureKinds::NONE
        },
        embed_dim: 16,
        filter_widths: alloc::vec![2, 3],
        maps_per_width: 16,
        claim_max_len: 4,
        doc_max_len: 12,
        label_hidden: 32,
        domain_hidden: 32,
        label_space: LabelSpace::Polarity,
        ..ModelConfig::default()
    }
}

pub fn bench_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 600,
        batch_size: 32,
        adam: AdamConfig {
            learning_rate: 1e-4,
            ..AdamConfig::default()
        },
        lambda_max: 0.3,
        ramp_gamma: 1.0,
        domain_lr_scale: 10.0,
        seed,
        runs: 1,
        ..TrainConfig::default()
    }
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        num += dx * (y - my);
        den += dx * dx;
    }
    num / den
}

/// Slopes of validation label and domain loss over the last third of the
/// epochs (`ceil(epochs / 3)` records).
pub fn final_third_slopes(history: &TrainingHistory) -> (Option<f64>, Option<f64>) {
    let n = history.len();
    let tail = &history.records[n - n.div_ceil(3)..];
    let series = |f: fn(&crate::trainer::EpochRecord) -> Option<f64>| -> Option<f64> {
        let ys: Option<Vec<f64>> = tail.iter().map(f).collect();
        ys.filter(|v| v.len() >= 2).map(|v| slope(&v))
    };
    (series(|r| r.val_label_loss), series(|r| r.val_domain_loss))
}

/// Accuracy of a fresh domain classifier on frozen features.
///
/// The probe has the form of the model's own domain head (dense, ReLU,
/// dense with `hidden` units). Features are standardised with statistics
/// of the first half of `rows`, on which the probe is trained; it is scored
/// on the second half. Constant features are only centred.
pub fn domain_probe(
    rows: &[Vec<f64>],
    domains: &[DomainTag],
    hidden: usize,
    seed: u64,
) -> Result<f64> {
    if rows.len() != domains.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: domains.len(),
        });
    }
    if rows.len() < 4 {
        return Err(Error::EmptyInput("probe examples"));
    }
    let dim = rows[0].len();
    let half = rows.len() / 2;
    let (train_rows, test_rows) = rows.split_at(half);
    let mut mean = alloc::vec![0.0; dim];
    for r in train_rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / half as f64;
        }
    }
    let mut scale = alloc::vec![0.0; dim];
    for r in train_rows {
        for ((s, x), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (x - m) * (x - m) / half as f64;
        }
    }
    for s in scale.iter_mut() {
        *s = if *s > 0.0 { 1.0 / libm::sqrt(*s) } else { 1.0 };
    }
    let standardise = |rs: &[Vec<f64>]| -> Result<Tensor> {
        let data = rs
            .iter()
            .flat_map(|r| {
                r.iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((x, m), s)| (x - m) * s)
            })
            .collect();
        Tensor::from_vec(&[rs.len(), dim], data)
    };
    let x_train = standardise(train_rows)?;
    let x_test = standardise(test_rows)?;
    let y_train: Vec<usize> = domains[..half].iter().map(|d| d.index()).collect();

    let mut r = rng::stream(seed, rng::PROBE, 0);
    let mut init = |name: &str, n_in: usize, n_out: usize| -> Result<Parameter> {
        let bound = libm::sqrt(6.0 / (n_in + n_out) as f64);
        let data = (0..n_in * n_out)
            .map(|_| r.gen_range(-bound..bound))
            .collect();
        Ok(Parameter::new(
            name,
            Tensor::from_vec(&[n_in, n_out], data)?,
        ))
    };
    let mut w1 = init("probe.w1", dim, hidden)?;
    let mut b1 = Parameter::zeros("probe.b1", &[hidden])?;
    let mut w2 = init("probe.w2", hidden, 2)?;
    let mut b2 = Parameter::zeros("probe.b2", &[2])?;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: 1e-2,
        ..AdamConfig::default()
    });
    for _ in 0..PROBE_STEPS {
        let pre = dense(&x_train, &w1, &b1)?;
        let h = relu(&pre);
        let logits = dense(&h, &w2, &b2)?;
        let (_, probs) = softmax_cross_entropy(&logits, &y_train)?;
        let d = softmax_cross_entropy_backward(&probs, &y_train)?;
        let dh = dense_backward(&h, &mut w2, &mut b2, &d)?;
        let dpre = relu_backward(&pre, &dh)?;
        dense_backward(&x_train, &mut w1, &mut b1, &dpre)?;
        adam.step(&mut [&mut w1, &mut b1, &mut w2, &mut b2])?;
    }
    let logits = dense(&relu(&dense(&x_test, &w1, &b1)?), &w2, &b2)?;
    let hits = (0..test_rows.len())
        .filter(|&i| crate::model::argmax(logits.row(i)) == domains[half + i].index())
        .count();
    Ok(hits as f64 / test_rows.len() as f64)
}

/// Full-batch Adam steps of the domain probe.
pub const PROBE_STEPS: usize = 500;

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub history: TrainingHistory,
    pub target_macro_f1: f64,
    pub probe_accuracy: f64,
}

/// Trains one variant on `data` and scores it.
pub fn run_variant(
    data: &SynthData,
    model: &ModelConfig,
    train: &TrainConfig,
) -> Result<VariantResult> {
    let run = train_run(
        &TrainSetup {
            model,
            train,
            source: &data.source,
            target: &data.target,
            pretrained: None,
        },
        0,
    )?;
    let m: &StanceModel = &run.model;
    let test: Vec<_> = data
        .target_test
        .iter()
        .map(|p| m.extract(&p.claim, &p.document))
        .collect();
    let pred = m.predict(&test)?;
    let gold: Vec<StanceLabel> = data.target_test.iter().map(|p| p.label).collect();
    let classes = [StanceLabel::Agree, StanceLabel::Disagree];
    let f1 = macro_f1(&gold, &pred, &classes)?.macro_f1;

    let probe: Vec<_> = data
        .probe
        .iter()
        .map(|p| m.extract(&p.claim, &p.document))
        .collect();
    let rows = m.feature_rows(&probe, FeatureKinds::CNN)?;
    let domains: Vec<DomainTag> = data.probe.iter().map(|p| p.domain).collect();
    let probe_accuracy = domain_probe(&rows, &domains, model.domain_hidden, train.seed)?;
    Ok(VariantResult {
        history: run.history,
        target_macro_f1: f1,
        probe_accuracy,
    })
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub adapted: VariantResult,
    pub plain: VariantResult,
    pub label_slope: Option<f64>,
    pub domain_slope: Option<f64>,
}

/// Generates the data for `seed` and runs both variants on it.
pub fn run_seed(cfg: &SynthConfig, seed: u64) -> Result<SeedResult> {
    let data = generate(cfg, seed);
    let train = bench_train_config(seed);
    let adapted = run_variant(&data, &bench_model_config(true), &train)?;
    let plain = run_variant(&data, &bench_model_config(false), &train)?;
    let (label_slope, domain_slope) = final_third_slopes(&adapted.history);
    Ok(SeedResult {
        seed,
        adapted,
        plain,
        label_slope,
        domain_slope,
    })
}

/// Seeds of a benchmark: `count` seeds derived from `seed`.
pub fn bench_seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count)
        .map(|i| rng::derive_seed(seed, rng::SYNTH, 1 + i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn slope_of_lines() {
        assert_eq!(slope(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(slope(&[3.0, 1.0]), -2.0);
        assert_eq!(slope(&[5.0, 5.0, 5.0, 5.0]), 0.0);
        // y = 0.5 x + noise symmetric around the line.
        assert!((slope(&[0.1, 0.4, 1.1, 1.4]) - 0.46).abs() < 1e-12);
    }

    #[test]
    fn generator_shapes() {
        let cfg = SynthConfig::default();
        let d = generate(&cfg, 1);
        assert_eq!(d.source.len(), 2000);
        assert_eq!(d.target.len(), 100);
        assert_eq!(d.target_test.len(), 1000);
        assert_eq!(d.probe.len(), 800);
        assert!(d.source.iter().all(|p| p.domain == DomainTag::Source));
        assert!(d
            .target
            .iter()
            .all(|p| p.domain == DomainTag::Target && !p.document.contains("sstyle")));
        assert!(d.source.iter().all(|p| !p.document.contains("tstyle")));
        assert!(d
            .source
            .iter()
            .all(|p| p.document.split(' ').count() == cfg.doc_len));
        assert!(d
            .source
            .iter()
            .all(|p| p.document.matches("smarker").count() == cfg.marker_per_doc));
        assert_eq!(generate(&cfg, 1), d);
        assert_ne!(generate(&cfg, 2).source, d.source);
    }

    #[test]
    fn probe_separates_separable_features() {
        let mut rows = Vec::new();
        let mut domains = Vec::new();
        let mut r = rng::stream(0, 500, 0);
        for i in 0..200 {
            let d = if i % 2 == 0 {
                DomainTag::Source
            } else {
                DomainTag::Target
            };
            let shift = if d == DomainTag::Source { 1.0 } else { -1.0 };
            rows.push(vec![shift + r.gen_range(-0.5..0.5), r.gen_range(-1.0..1.0)]);
            domains.push(d);
        }
        assert_eq!(domain_probe(&rows, &domains, 8, 0).unwrap(), 1.0);
        let noise: Vec<Vec<f64>> = rows.iter().map(|_| vec![r.gen_range(-1.0..1.0)]).collect();
        assert!(domain_probe(&noise, &domains, 8, 0).unwrap() < 0.7);
    }
}
