//! Two-level prediction: a related/unrelated model gates a three-class
//! agree/disagree/discuss model.

use alloc::vec::Vec;

use crate::config::{FeatureKinds, HierarchyConfig, LabelSpace, ModelConfig, Stage2Routing};
use crate::data::{LabeledPair, Relatedness, StanceLabel};
use crate::model::StanceModel;
use crate::trainer::{train_run, TrainSetup, TrainedRun, TrainingHistory};
use crate::{Error, Result};

pub fn collapse_binary(label: StanceLabel) -> Relatedness {
    label.relatedness()
}

/// Stage 1 architecture: related/unrelated over `features`, never
/// domain-adapted, whatever `base` says.
pub fn stage1_config(base: &ModelConfig, features: FeatureKinds) -> ModelConfig {
    ModelConfig {
        use_bow: features.bow,
        use_cnn: features.cnn,
        da_features: FeatureKinds::NONE,
        label_space: LabelSpace::Relatedness,
        ..base.clone()
    }
}

/// Stage 2 architecture: `base` restricted to the three related classes.
pub fn stage2_config(base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        label_space: LabelSpace::RelatedStance,
        ..base.clone()
    }
}

/// Trains stage 1 on every target example with collapsed labels.
pub fn train_stage1(
    base: &ModelConfig,
    hierarchy: &HierarchyConfig,
    setup: &TrainSetup<'_>,
    run: usize,
) -> Result<TrainedRun> {
    let config = stage1_config(base, hierarchy.stage1_features);
    train_run(
        &TrainSetup {
            model: &config,
            source: &[],
            ..*setup
        },
        run,
    )
}

/// Target examples stage 2 trains on. Gold routing keeps the gold-related
/// ones; predicted routing keeps those that are gold-related and that
/// `stage1` also predicts related (the others have no three-class label or
/// would never reach stage 2).
pub fn stage2_target_pool(
    target: &[LabeledPair],
    routing: Stage2Routing,
    stage1: Option<&StanceModel>,
) -> Result<Vec<LabeledPair>> {
    let related: Vec<&LabeledPair> = target.iter().filter(|p| p.label.is_related()).collect();
    let keep = match routing {
        Stage2Routing::Gold => related,
        Stage2Routing::Predicted => {
            let model = stage1.ok_or_else(|| {
                Error::InvalidArgument("predicted routing needs a stage 1 model".into())
            })?;
            let feats: Vec<_> = related
                .iter()
                .map(|p| model.extract(&p.claim, &p.document))
                .collect();
            let pred = model.predict_relatedness(&feats)?;
            related
                .into_iter()
                .zip(pred)
                .filter(|(_, r)| *r == Relatedness::Related)
                .map(|(p, _)| p)
                .collect()
        }
    };
    if keep.is_empty() {
        return Err(Error::NoRelatedExamples);
    }
    Ok(keep.into_iter().cloned().collect())
}

/// Trains stage 2 on the routed target pool plus every source example.
pub fn train_stage2(
    base: &ModelConfig,
    hierarchy: &HierarchyConfig,
    setup: &TrainSetup<'_>,
    stage1: Option<&StanceModel>,
    run: usize,
) -> Result<TrainedRun> {
    let config = stage2_config(base);
    let pool = stage2_target_pool(setup.target, hierarchy.stage2_routing, stage1)?;
    train_run(
        &TrainSetup {
            model: &config,
            target: &pool,
            ..*setup
        },
        run,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    pub stage1: StanceModel,
    pub stage2: StanceModel,
}

/// Both stages of one hierarchical run with their training histories.
#[derive(Debug, Clone)]
pub struct HierarchicalRun {
    pub model: HierarchicalModel,
    pub stage1_history: TrainingHistory,
    pub stage2_history: TrainingHistory,
}

pub fn train_hierarchical(
    base: &ModelConfig,
    hierarchy: &HierarchyConfig,
    setup: &TrainSetup<'_>,
    run: usize,
) -> Result<HierarchicalRun> {
    // Fail before spending time on stage 1.
    if !setup.target.iter().any(|p| p.label.is_related()) {
        return Err(Error::NoRelatedExamples);
    }
    let s1 = train_stage1(base, hierarchy, setup, run)?;
    let s2 = train_stage2(base, hierarchy, setup, Some(&s1.model), run)?;
    Ok(HierarchicalRun {
        model: HierarchicalModel::new(s1.model, s2.model)?,
        stage1_history: s1.history,
        stage2_history: s2.history,
    })
}

/// Combines stage outputs: examples stage 1 calls unrelated are final;
/// `stage2` is called once with the indices of the others (possibly none)
/// and must return one related label per index.
pub fn route<F>(stage1: &[Relatedness], stage2: F) -> Result<Vec<StanceLabel>>
where
    F: FnOnce(&[usize]) -> Result<Vec<StanceLabel>>,
{
    let forwarded: Vec<usize> = (0..stage1.len())
        .filter(|&i| stage1[i] == Relatedness::Related)
        .collect();
    let labels = stage2(&forwarded)?;
    if labels.len() != forwarded.len() {
        return Err(Error::LengthMismatch {
            left: forwarded.len(),
            right: labels.len(),
        });
    }
    let mut out = alloc::vec![StanceLabel::Unrelated; stage1.len()];
    for (&i, l) in forwarded.iter().zip(labels) {
        if !l.is_related() {
            return Err(Error::InvalidArgument("stage 2 predicted unrelated".into()));
        }
        out[i] = l;
    }
    Ok(out)
}

impl HierarchicalModel {
    pub fn new(stage1: StanceModel, stage2: StanceModel) -> Result<Self> {
        if stage1.label_space() != LabelSpace::Relatedness {
            return Err(Error::InvalidArgument(
                "stage 1 must predict related/unrelated".into(),
            ));
        }
        if stage2.label_space() != LabelSpace::RelatedStance {
            return Err(Error::InvalidArgument(
                "stage 2 must predict agree/disagree/discuss".into(),
            ));
        }
        Ok(HierarchicalModel { stage1, stage2 })
    }

    /// Stage 1 decisions for raw claim/document pairs.
    pub fn stage1_predict<S: AsRef<str>>(&self, pairs: &[(S, S)]) -> Result<Vec<Relatedness>> {
        let feats: Vec<_> = pairs
            .iter()
            .map(|(c, d)| self.stage1.extract(c.as_ref(), d.as_ref()))
            .collect();
        self.stage1.predict_relatedness(&feats)
    }

    /// Stage 2 labels for the given pairs.
    pub fn stage2_predict<S: AsRef<str>>(
        &self,
        pairs: &[(S, S)],
        which: &[usize],
    ) -> Result<Vec<StanceLabel>> {
        let feats: Vec<_> = which
            .iter()
            .map(|&i| {
                self.stage2
                    .extract(pairs[i].0.as_ref(), pairs[i].1.as_ref())
            })
            .collect();
        self.stage2.predict(&feats)
    }

    pub fn predict<S: AsRef<str>>(&self, pairs: &[(S, S)]) -> Result<Vec<StanceLabel>> {
        let s1 = self.stage1_predict(pairs)?;
        route(&s1, |which| self.stage2_predict(pairs, which))
    }
}
