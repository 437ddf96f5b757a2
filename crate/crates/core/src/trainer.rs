//! Joint adversarial training: balanced per-epoch sampling, the λ ramp,
//! Adam updates, per-epoch validation and best-run selection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::config::{ModelConfig, SelectionLoss, TrainConfig};
use crate::data::{epoch_sample_indices, split_train_validation, DomainTag, LabeledPair};
use crate::model::DOMAIN_PREFIX;
use crate::model::{
    Batch, FeatureBundle, FeatureSpace, Init, LossTerms, PretrainedEmbeddings, StanceModel,
};
use crate::nn::Adam;
use crate::rng;
use crate::{Error, Result};

/// Above this many bytes of extracted features, bundles are rebuilt per
/// batch instead of cached.
const FEATURE_CACHE_BYTES: usize = 256 << 20;

/// `lambda_max * (2 / (1 + exp(-gamma * progress)) - 1)`.
pub fn lambda_schedule(progress: f64, lambda_max: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::InvalidArgument(format!(
            "progress must lie in [0, 1], got {progress}"
        )));
    }
    Ok(lambda_max * (2.0 / (1.0 + libm::exp(-gamma * progress)) - 1.0))
}

/// Seed of run `run` of a multi-run experiment.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    rng::derive_seed(seed, rng::RUN, run as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub train_label_loss: Option<f64>,
    pub train_domain_loss: Option<f64>,
    pub val_label_loss: Option<f64>,
    pub val_domain_loss: Option<f64>,
}

/// One record per completed epoch, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str =
    "epoch\tlambda\ttrain_label_loss\ttrain_domain_loss\tval_label_loss\tval_domain_loss";

/// Placeholder for a loss that was not computed.
pub const MISSING: &str = "-";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:?}"),
        None => String::from(MISSING),
    }
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Smallest validation loss of the given kind over all epochs.
    pub fn min_validation_loss(&self, which: SelectionLoss) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| match which {
                SelectionLoss::Label => r.val_label_loss,
                SelectionLoss::Domain => r.val_domain_loss,
                SelectionLoss::Sum => Some(r.val_label_loss? + r.val_domain_loss.unwrap_or(0.0)),
            })
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            })
    }

    /// Tab-separated log with a header line. Losses are written in
    /// round-trip precision; absent losses as `-`.
    pub fn to_log(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{:?}\t{}\t{}\t{}\t{}",
                r.epoch,
                r.lambda,
                fmt_opt(r.train_label_loss),
                fmt_opt(r.train_domain_loss),
                fmt_opt(r.val_label_loss),
                fmt_opt(r.val_domain_loss),
            );
        }
        out
    }

    pub fn from_log(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() || (n == 0 && line == HISTORY_HEADER) {
                continue;
            }
            let bad = |m: &str| Error::InvalidArgument(format!("history line {}: {m}", n + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 tab-separated fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
            let opt = |s: &str| {
                if s == MISSING {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad("malformed epoch"))?,
                lambda: num(f[1])?,
                train_label_loss: opt(f[2])?,
                train_domain_loss: opt(f[3])?,
                val_label_loss: opt(f[4])?,
                val_domain_loss: opt(f[5])?,
            });
        }
        Ok(TrainingHistory { records })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: StanceModel,
    pub history: TrainingHistory,
}

/// Examples of one domain with their targets and (optionally cached)
/// features.
struct Pool<'a> {
    pairs: Vec<&'a LabeledPair>,
    labels: Vec<Option<usize>>,
    cache: Option<Vec<FeatureBundle>>,
}

impl<'a> Pool<'a> {
    fn new(pairs: Vec<&'a LabeledPair>, model: &StanceModel, cache: bool, labelled: bool) -> Self {
        let space = model.label_space();
        let labels = pairs
            .iter()
            .map(|p| {
                if labelled {
                    space.class_of(p.label)
                } else {
                    None
                }
            })
            .collect();
        let cache = cache.then(|| {
            pairs
                .iter()
                .map(|p| model.extract(&p.claim, &p.document))
                .collect()
        });
        Pool {
            pairs,
            labels,
            cache,
        }
    }

    fn features(&self, i: usize, model: &StanceModel) -> FeatureBundle {
        match &self.cache {
            Some(c) => c[i].clone(),
            None => model.extract(&self.pairs[i].claim, &self.pairs[i].document),
        }
    }
}

fn bundle_bytes(config: &ModelConfig) -> usize {
    let ids = if config.use_cnn {
        config.claim_max_len + config.doc_max_len
    } else {
        0
    };
    (config.bow_width() + ids) * 8 + 64
}

/// Running mean weighted by example counts.
#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    weight: f64,
}

impl Mean {
    fn add(&mut self, value: Option<f64>, weight: usize) {
        if let Some(v) = value {
            self.sum += v * weight as f64;
            self.weight += weight as f64;
        }
    }

    fn get(self) -> Option<f64> {
        (self.weight > 0.0).then(|| self.sum / self.weight)
    }
}

fn check_finite(v: Option<f64>, epoch: usize, batch: usize) -> Result<()> {
    match v {
        Some(x) if !x.is_finite() => Err(Error::NonFiniteLoss { epoch, batch }),
        _ => Ok(()),
    }
}

fn clip_gradients(model: &mut StanceModel, max_norm: f64) {
    let mut params = model.parameters_mut();
    let norm = libm::sqrt(
        params
            .iter()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>(),
    );
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            for g in p.grad.data_mut() {
                *g *= scale;
            }
        }
    }
}

/// Mean label and domain losses over `examples`, in chunks.
pub fn evaluate_losses(
    model: &StanceModel,
    examples: &[&LabeledPair],
    with_domain: bool,
) -> Result<(Option<f64>, Option<f64>)> {
    let space = model.label_space();
    let (mut label, mut domain) = (Mean::default(), Mean::default());
    for chunk in examples.chunks(256) {
        let feats: Vec<FeatureBundle> = chunk
            .iter()
            .map(|p| model.extract(&p.claim, &p.document))
            .collect();
        let labels: Vec<Option<usize>> = chunk.iter().map(|p| space.class_of(p.label)).collect();
        let domains: Vec<DomainTag> = chunk.iter().map(|p| p.domain).collect();
        let l = model.loss(
            &Batch {
                features: &feats,
                labels: &labels,
                domains: &domains,
            },
            0.0,
        )?;
        label.add(l.label, labels.iter().filter(|l| l.is_some()).count());
        if with_domain {
            domain.add(l.domain, chunk.len());
        }
    }
    Ok((label.get(), domain.get()))
}

/// Everything a run needs besides its seed.
pub struct TrainSetup<'a> {
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub source: &'a [LabeledPair],
    pub target: &'a [LabeledPair],
    pub pretrained: Option<&'a dyn PretrainedEmbeddings>,
}

/// Trains one model. The validation split depends on `train.seed` only, so
/// every run of an experiment validates on the same examples; run `run`
/// draws its initialisation and epoch samples from [`run_seed`].
pub fn train_run(setup: &TrainSetup<'_>, run: usize) -> Result<TrainedRun> {
    let (mconf, tconf) = (setup.model, setup.train);
    tconf.validate()?;
    if setup.target.is_empty() {
        return Err(Error::EmptyInput("target examples"));
    }
    if let Some(p) = setup
        .target
        .iter()
        .find(|p| mconf.label_space.class_of(p.label).is_none())
    {
        return Err(Error::LabelNotInSpace {
            label: p.label.as_str(),
            space: mconf.label_space.key(),
        });
    }
    let mut all = Vec::with_capacity(setup.source.len() + setup.target.len());
    all.extend(setup.source.iter().map(|p| LabeledPair {
        domain: DomainTag::Source,
        ..p.clone()
    }));
    all.extend(setup.target.iter().map(|p| LabeledPair {
        domain: DomainTag::Target,
        ..p.clone()
    }));
    let (train_set, val_set) = split_train_validation(&all, tconf.validation_fraction, tconf.seed)?;
    let source: Vec<&LabeledPair> = train_set
        .iter()
        .filter(|p| p.domain == DomainTag::Source)
        .collect();
    let target: Vec<&LabeledPair> = train_set
        .iter()
        .filter(|p| p.domain == DomainTag::Target)
        .collect();
    let validation: Vec<&LabeledPair> = val_set.iter().collect();
    if target.is_empty() {
        return Err(Error::EmptyInput("target training examples"));
    }

    let seed = run_seed(tconf.seed, run);
    let space = FeatureSpace::fit(mconf, &source, &target)?;
    let mut model = StanceModel::new(
        mconf,
        space,
        Init::Random {
            seed,
            pretrained: setup.pretrained,
        },
    )?;
    let adversarial = model.has_domain_head() && !source.is_empty();
    let cache = (source.len() + target.len()) * bundle_bytes(model.config()) <= FEATURE_CACHE_BYTES;
    let pools = [
        Pool::new(source, &model, cache, mconf.source_in_label_loss),
        Pool::new(target, &model, cache, true),
    ];
    let val_has_source = validation.iter().any(|p| p.domain == DomainTag::Source);

    let mut adam = Adam::new(tconf.adam);
    let mut history = TrainingHistory::default();
    for epoch in 0..tconf.epochs {
        let lambda = if adversarial {
            lambda_schedule(
                epoch as f64 / tconf.epochs as f64,
                tconf.lambda_max,
                tconf.ramp_gamma,
            )?
        } else {
            0.0
        };
        let terms = LossTerms {
            label: true,
            domain: adversarial,
        };
        let sample = epoch_sample_indices(pools[0].pairs.len(), pools[1].pairs.len(), epoch, seed);
        let (mut label_mean, mut domain_mean) = (Mean::default(), Mean::default());
        for (b, chunk) in sample.chunks(tconf.batch_size).enumerate() {
            let mut feats = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            let mut domains = Vec::with_capacity(chunk.len());
            for &(d, i) in chunk {
                let pool = &pools[d.index()];
                feats.push(pool.features(i, &model));
                labels.push(pool.labels[i]);
                domains.push(d);
            }
            model.zero_grad();
            let out = model.backward(
                &Batch {
                    features: &feats,
                    labels: &labels,
                    domains: &domains,
                },
                lambda,
                terms,
            )?;
            check_finite(out.losses.label, epoch, b)?;
            check_finite(out.losses.domain, epoch, b)?;
            label_mean.add(
                out.losses.label,
                labels.iter().filter(|l| l.is_some()).count(),
            );
            domain_mean.add(out.losses.domain, chunk.len());
            if let Some(c) = tconf.grad_clip {
                clip_gradients(&mut model, c);
            }
            let scale = tconf.domain_lr_scale;
            adam.step_scaled(&mut model.parameters_mut(), |name| {
                if name.starts_with(DOMAIN_PREFIX) {
                    scale
                } else {
                    1.0
                }
            })?;
        }
        let (val_label, val_domain) = if validation.is_empty() {
            (None, None)
        } else {
            evaluate_losses(&model, &validation, adversarial && val_has_source)?
        };
        history.records.push(EpochRecord {
            epoch,
            lambda,
            train_label_loss: label_mean.get(),
            train_domain_loss: domain_mean.get(),
            val_label_loss: val_label,
            val_domain_loss: val_domain,
        });
    }
    Ok(TrainedRun { model, history })
}

/// Run 0 of [`train_run`].
pub fn train(setup: &TrainSetup<'_>) -> Result<TrainedRun> {
    train_run(setup, 0)
}

/// Index of the run whose smallest validation loss is lowest; ties go to
/// the earlier run. Runs without any validation loss rank last.
pub fn select_best_index(histories: &[&TrainingHistory], which: SelectionLoss) -> Result<usize> {
    if histories.is_empty() {
        return Err(Error::EmptyInput("runs"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, h) in histories.iter().enumerate() {
        let v = h.min_validation_loss(which).unwrap_or(f64::INFINITY);
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    Ok(best.map_or(0, |(i, _)| i))
}

/// Takes the best run out of `runs` (see [`select_best_index`]).
pub fn select_best(mut runs: Vec<TrainedRun>, which: SelectionLoss) -> Result<(usize, TrainedRun)> {
    let histories: Vec<&TrainingHistory> = runs.iter().map(|r| &r.history).collect();
    let i = select_best_index(&histories, which)?;
    Ok((i, runs.swap_remove(i)))
}
