//! Labelled claim/document pairs, validation splits and balanced per-epoch
//! sampling of the source and target pools.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::{index, SliceRandom};

use crate::rng;
use crate::{Error, Result};

/// Stance of a document towards a claim. The declaration order is the fixed
/// class order used everywhere (tie breaks, confusion matrices, reports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StanceLabel {
    Agree,
    Disagree,
    Discuss,
    Unrelated,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 4] = [
        StanceLabel::Agree,
        StanceLabel::Disagree,
        StanceLabel::Discuss,
        StanceLabel::Unrelated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Agree => "agree",
            StanceLabel::Disagree => "disagree",
            StanceLabel::Discuss => "discuss",
            StanceLabel::Unrelated => "unrelated",
        }
    }

    pub fn relatedness(self) -> Relatedness {
        match self {
            StanceLabel::Unrelated => Relatedness::Unrelated,
            _ => Relatedness::Related,
        }
    }

    pub fn is_related(self) -> bool {
        self.relatedness() == Relatedness::Related
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StanceLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stance `{s}`")))
    }
}

/// Binary view of a stance used by the first level of the hierarchy and by
/// the first level of the weighted-accuracy score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relatedness {
    Related,
    Unrelated,
}

impl Relatedness {
    pub const ALL: [Relatedness; 2] = [Relatedness::Related, Relatedness::Unrelated];

    pub fn as_str(self) -> &'static str {
        match self {
            Relatedness::Related => "related",
            Relatedness::Unrelated => "unrelated",
        }
    }
}

impl fmt::Display for Relatedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DomainTag {
    Source,
    Target,
}

impl DomainTag {
    /// Class index for the domain classifier.
    pub fn index(self) -> usize {
        match self {
            DomainTag::Source => 0,
            DomainTag::Target => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(DomainTag::Source),
            "target" => Ok(DomainTag::Target),
            _ => Err(Error::InvalidArgument(format!("unknown domain `{s}`"))),
        }
    }
}

/// One claim/document example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub id: String,
    pub claim: String,
    pub document: String,
    pub label: StanceLabel,
    pub domain: DomainTag,
}

impl LabeledPair {
    pub fn new(
        id: impl Into<String>,
        claim: impl Into<String>,
        document: impl Into<String>,
        label: StanceLabel,
        domain: DomainTag,
    ) -> Self {
        LabeledPair {
            id: id.into(),
            claim: claim.into(),
            document: document.into(),
            label,
            domain,
        }
    }
}

/// `ceil(fraction * n)` with a little slack for representation error, so
/// `0.7 * 10` gives 7 rather than 8.
fn validation_count(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    (libm::ceil(raw - 1e-9) as usize).min(n)
}

/// Splits `examples` into `(train, validation)`.
///
/// Each domain is shuffled independently with a seeded generator and
/// contributes `ceil(fraction * n_domain)` candidates. When both domains are
/// present the validation set takes `min` of the two candidate counts from
/// each domain, so it holds equal amounts of source and target; candidates
/// beyond that go back to training.
pub fn split_train_validation(
    examples: &[LabeledPair],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledPair>, Vec<LabeledPair>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if examples.is_empty() {
        return Err(Error::EmptyInput("examples"));
    }
    let mut pools: [Vec<&LabeledPair>; 2] = [Vec::new(), Vec::new()];
    for ex in examples {
        pools[ex.domain.index()].push(ex);
    }
    for (d, pool) in pools.iter_mut().enumerate() {
        pool.shuffle(&mut rng::stream(seed, rng::SPLIT, d as u64));
    }
    let counts = pools
        .each_ref()
        .map(|p| validation_count(p.len(), fraction));
    let take = if pools.iter().all(|p| !p.is_empty()) {
        let m = counts[0].min(counts[1]);
        [m, m]
    } else {
        counts
    };
    let mut train = Vec::with_capacity(examples.len());
    let mut validation = Vec::new();
    for (pool, k) in pools.iter().zip(take) {
        validation.extend(pool[..k].iter().map(|&e| e.clone()));
        train.extend(pool[k..].iter().map(|&e| e.clone()));
    }
    Ok((train, validation))
}

/// Index form of [`epoch_sample_balanced`]: `(domain, index into that
/// domain's pool)` pairs.
pub fn epoch_sample_indices(
    source_len: usize,
    target_len: usize,
    epoch: usize,
    seed: u64,
) -> Vec<(DomainTag, usize)> {
    let mut rng = rng::stream(seed, rng::EPOCH_SAMPLE, epoch as u64);
    let mut sample: Vec<(DomainTag, usize)> = if source_len == 0 {
        (0..target_len).map(|i| (DomainTag::Target, i)).collect()
    } else {
        let k = source_len.min(target_len);
        let mut out = Vec::with_capacity(2 * k);
        for (domain, len) in [
            (DomainTag::Source, source_len),
            (DomainTag::Target, target_len),
        ] {
            out.extend(
                index::sample(&mut rng, len, k)
                    .into_iter()
                    .map(|i| (domain, i)),
            );
        }
        out
    };
    sample.shuffle(&mut rng);
    sample
}

/// Draws this epoch's training sample: `k = min(|source|, |target|)`
/// examples without replacement from each pool, concatenated and shuffled.
/// With an empty source pool the whole target pool is returned shuffled.
///
/// The draw depends only on `(seed, epoch)`.
pub fn epoch_sample_balanced<'a>(
    source_pool: &'a [LabeledPair],
    target_pool: &'a [LabeledPair],
    epoch: usize,
    seed: u64,
) -> Vec<&'a LabeledPair> {
    epoch_sample_indices(source_pool.len(), target_pool.len(), epoch, seed)
        .into_iter()
        .map(|(d, i)| match d {
            DomainTag::Source => &source_pool[i],
            DomainTag::Target => &target_pool[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;

    fn pairs(n: usize, domain: DomainTag) -> Vec<LabeledPair> {
        (0..n)
            .map(|i| {
                LabeledPair::new(
                    format!("{domain}-{i}"),
                    "claim",
                    "doc",
                    StanceLabel::Agree,
                    domain,
                )
            })
            .collect()
    }

    fn ids<'a>(xs: impl IntoIterator<Item = &'a LabeledPair>) -> BTreeSet<String> {
        xs.into_iter().map(|p| p.id.clone()).collect()
    }

    #[test]
    fn labels_round_trip_as_lowercase_strings() {
        for l in StanceLabel::ALL {
            assert_eq!(l.to_string().parse::<StanceLabel>().unwrap(), l);
        }
        assert!("Agree".parse::<StanceLabel>().is_err());
        assert_eq!(StanceLabel::Discuss.relatedness(), Relatedness::Related);
        assert_eq!(StanceLabel::Unrelated.relatedness(), Relatedness::Unrelated);
    }

    #[test]
    fn split_target_only() {
        let data = pairs(10, DomainTag::Target);
        let (train, val) = split_train_validation(&data, 0.2, 7).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
        let (t, v) = (ids(&train), ids(&val));
        assert!(t.is_disjoint(&v));
        assert_eq!(t.union(&v).count(), 10);
    }

    #[test]
    fn split_equalizes_domains() {
        let mut data = pairs(10, DomainTag::Source);
        data.extend(pairs(6, DomainTag::Target));
        let (train, val) = split_train_validation(&data, 0.5, 1).unwrap();
        let count = |xs: &[LabeledPair], d| xs.iter().filter(|p| p.domain == d).count();
        assert_eq!(count(&val, DomainTag::Source), 3);
        assert_eq!(count(&val, DomainTag::Target), 3);
        assert_eq!(train.len(), 10);
    }

    #[test]
    fn split_is_deterministic_and_rejects_bad_fraction() {
        let data = pairs(25, DomainTag::Target);
        assert_eq!(
            split_train_validation(&data, 0.3, 99).unwrap(),
            split_train_validation(&data, 0.3, 99).unwrap()
        );
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(split_train_validation(&data, bad, 0).is_err());
        }
        assert!(split_train_validation(&[], 0.2, 0).is_err());
    }

    #[test]
    fn validation_count_tolerates_float_error() {
        assert_eq!(validation_count(10, 0.7), 7);
        assert_eq!(validation_count(10, 0.2), 2);
        assert_eq!(validation_count(11, 0.2), 3);
        assert_eq!(validation_count(1, 0.2), 1);
    }

    #[test]
    fn balanced_sample_takes_min_per_domain() {
        let s = pairs(10, DomainTag::Source);
        let t = pairs(4, DomainTag::Target);
        let sample = epoch_sample_balanced(&s, &t, 0, 3);
        assert_eq!(sample.len(), 8);
        assert_eq!(
            sample
                .iter()
                .filter(|p| p.domain == DomainTag::Source)
                .count(),
            4
        );
        assert_eq!(ids(sample.iter().copied()).len(), 8);
    }

    #[test]
    fn balanced_sample_without_source() {
        let t = pairs(5, DomainTag::Target);
        let sample = epoch_sample_balanced(&[], &t, 2, 3);
        assert_eq!(ids(sample.iter().copied()), ids(&t));
        assert!(sample.iter().all(|p| p.domain == DomainTag::Target));
    }

    #[test]
    fn balanced_sample_varies_by_epoch() {
        let s = pairs(40, DomainTag::Source);
        let t = pairs(5, DomainTag::Target);
        let draws: BTreeSet<BTreeSet<String>> = (0..6)
            .map(|e| {
                ids(epoch_sample_balanced(&s, &t, e, 11)
                    .into_iter()
                    .filter(|p| p.domain == DomainTag::Source))
            })
            .collect();
        assert!(draws.len() > 1);
        assert_eq!(
            epoch_sample_balanced(&s, &t, 4, 11),
            epoch_sample_balanced(&s, &t, 4, 11)
        );
    }
}
