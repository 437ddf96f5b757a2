use std::fmt;
use std::path::PathBuf;

use stance_dann_core::config::{FeatureKinds, ModelConfig};
use stance_dann_core::model::{gradcheck_instance, LossTerms, DOMAIN_PREFIX};
use stance_dann_core::nn::gradcheck::{finite_diff_check, GradCheckConfig, Objective};
use stance_dann_core::nn::layercheck::check_layers;

use super::train::load_config;
use crate::Result;

#[derive(Debug, Clone)]
pub struct GradcheckArgs {
    pub config: Option<PathBuf>,
    pub seed: u64,
    /// Reversal constant for adapted architectures.
    pub lambda: f64,
    /// Check all six BOW / CNN / BOW+CNN, with and without adaptation,
    /// instead of the configured architecture.
    pub all_variants: bool,
    /// Test hook: scales the backward gradients of parameters with this
    /// name prefix by 1.1.
    pub corrupt_backward: Option<String>,
}

impl Default for GradcheckArgs {
    fn default() -> Self {
        GradcheckArgs {
            config: None,
            seed: 0,
            lambda: 1.0,
            all_variants: false,
            corrupt_backward: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    /// `layer:<name>` or `<architecture>:<parameter>`.
    pub group: String,
    pub coords: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupResult>,
    /// Per adapted architecture: parameters upstream of the reversal with a
    /// nonzero domain-loss gradient at lambda = 0.
    pub zero_lambda_leaks: Vec<(String, Vec<String>)>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
            && self.zero_lambda_leaks.iter().all(|(_, l)| l.is_empty())
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupResult> {
        self.groups.iter().filter(|g| !g.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            let verdict = if g.passed { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{verdict:4} {:<44} coords {:>3}  max rel err {:.3e}",
                g.group, g.coords, g.max_rel_error
            )?;
        }
        for (arch, leaks) in &self.zero_lambda_leaks {
            if leaks.is_empty() {
                writeln!(f, "ok   {arch}: lambda = 0 zeroes the adversarial gradient upstream of the reversal")?;
            } else {
                writeln!(
                    f,
                    "FAIL {arch}: lambda = 0 leaves domain gradient in {}",
                    leaks.join(", ")
                )?;
            }
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict}: {} groups, max relative error {:.3e} (tolerance {:.0e})",
            self.groups.len(),
            self.max_rel_error(),
            self.tolerance
        )
    }
}

pub fn architecture_name(c: &ModelConfig) -> String {
    let kinds = c.features().render().replace(',', "+");
    if c.has_domain_head() {
        format!("{kinds}+da[{}]", c.da_features.render())
    } else {
        kinds
    }
}

/// The six architectures: each feature combination with and without
/// adapting all of its blocks.
pub fn variants(base: &ModelConfig) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for kinds in [FeatureKinds::BOW, FeatureKinds::CNN, FeatureKinds::BOTH] {
        for da in [FeatureKinds::NONE, kinds] {
            out.push(ModelConfig {
                use_bow: kinds.bow,
                use_cnn: kinds.cnn,
                da_features: da,
                ..base.clone()
            });
        }
    }
    out
}

fn check_architecture(
    config: &ModelConfig,
    args: &GradcheckArgs,
    gc: &GradCheckConfig,
    report: &mut GradcheckReport,
) -> Result<()> {
    let name = architecture_name(config);
    let lambda = if config.has_domain_head() {
        args.lambda
    } else {
        0.0
    };
    let mut obj = gradcheck_instance(config, lambda, args.seed)?;
    obj.model.corrupt_backward(args.corrupt_backward.as_deref());
    let checked = finite_diff_check(&mut obj, gc)?;
    for c in checked.checks {
        report.groups.push(GroupResult {
            group: format!("{name}:{}", c.name),
            coords: c.coords_checked,
            max_rel_error: c.max_rel_error,
            passed: c.passed,
        });
    }
    if config.has_domain_head() {
        obj.lambda = 0.0;
        obj.gradient_of(LossTerms::DOMAIN)?;
        let leaks = obj
            .parameters()
            .iter()
            .filter(|p| {
                !p.name.starts_with(DOMAIN_PREFIX) && p.grad.data().iter().any(|&g| g != 0.0)
            })
            .map(|p| p.name.clone())
            .collect();
        report.zero_lambda_leaks.push((name, leaks));
    }
    Ok(())
}

pub fn run(args: &GradcheckArgs) -> Result<GradcheckReport> {
    let config = load_config(args.config.as_deref())?.model;
    let gc = GradCheckConfig {
        seed: args.seed,
        ..GradCheckConfig::default()
    };
    let mut report = GradcheckReport {
        tolerance: gc.tolerance,
        groups: Vec::new(),
        zero_lambda_leaks: Vec::new(),
    };
    for (layer, r) in check_layers(args.lambda, &gc)? {
        for c in r.checks {
            report.groups.push(GroupResult {
                group: format!("layer:{layer}:{}", c.name),
                coords: c.coords_checked,
                max_rel_error: c.max_rel_error,
                passed: c.passed,
            });
        }
    }
    let architectures = if args.all_variants {
        variants(&config)
    } else {
        vec![config]
    };
    for c in &architectures {
        check_architecture(c, args, &gc, &mut report)?;
    }
    Ok(report)
}
