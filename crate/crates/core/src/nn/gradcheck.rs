//! Central finite-difference gradient checking.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;

use super::Parameter;
use crate::rng;
use crate::Result;

/// Something with parameters and a deterministic scalar loss.
pub trait Objective {
    fn parameters(&mut self) -> Vec<&mut Parameter>;

    /// Forward pass only.
    fn loss(&mut self) -> Result<f64>;

    /// The scalar whose gradient parameter `param` is expected to follow.
    /// Equal to [`Objective::loss`] unless a gradient reversal sends
    /// different parameters down different objectives.
    fn loss_seen_by(&mut self, param: usize) -> Result<f64> {
        let _ = param;
        self.loss()
    }

    /// Zeroes gradients, then runs forward and backward so every parameter
    /// holds its analytic gradient. Returns the loss.
    fn gradient(&mut self) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Coordinates checked per parameter; larger parameters are sampled.
    pub max_coords: usize,
    /// Denominator floor of the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-5,
            max_coords: 64,
            floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checks: Vec<ParameterCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParameterCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `f` at every coordinate of `point`.
pub fn numeric_gradient(point: &[f64], epsilon: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + epsilon;
            let plus = f(&x);
            x[i] = orig - epsilon;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * epsilon)
        })
        .collect()
}

fn set_coord<O: Objective + ?Sized>(obj: &mut O, param: usize, coord: usize, value: f64) {
    obj.parameters()[param].value.data_mut()[coord] = value;
}

/// Numeric gradient of [`Objective::loss_seen_by`] at the chosen
/// coordinates of parameter `param`. Parameter values are restored bit-exactly.
pub fn numeric_coords<O: Objective + ?Sized>(
    obj: &mut O,
    param: usize,
    coords: &[usize],
    epsilon: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(coords.len());
    for &c in coords {
        let orig = obj.parameters()[param].value.data()[c];
        set_coord(obj, param, c, orig + epsilon);
        let plus = obj.loss_seen_by(param);
        set_coord(obj, param, c, orig - epsilon);
        let minus = obj.loss_seen_by(param);
        set_coord(obj, param, c, orig);
        out.push((plus? - minus?) / (2.0 * epsilon));
    }
    Ok(out)
}

/// Coordinates of a parameter of `len` values that a check visits.
pub fn sample_coords(len: usize, max_coords: usize, seed: u64, param: usize) -> Vec<usize> {
    if len <= max_coords {
        return (0..len).collect();
    }
    let mut r = rng::stream(seed, rng::GRADCHECK, param as u64);
    let mut picked = index::sample(&mut r, len, max_coords).into_vec();
    picked.sort_unstable();
    picked
}

/// Compares analytic gradients with central finite differences on up to
/// `max_coords` coordinates of every parameter.
pub fn finite_diff_check<O: Objective + ?Sized>(
    obj: &mut O,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    obj.gradient()?;
    let analytic: Vec<(String, Vec<f64>)> = obj
        .parameters()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();
    let mut checks = Vec::with_capacity(analytic.len());
    for (i, (name, grad)) in analytic.into_iter().enumerate() {
        let coords = sample_coords(grad.len(), config.max_coords, config.seed, i);
        let numeric = numeric_coords(obj, i, &coords, config.epsilon)?;
        let mut worst = (0.0, 0, 0.0, 0.0);
        for (&c, &n) in coords.iter().zip(&numeric) {
            let e = relative_error(grad[c], n, config.floor);
            if e > worst.0 || (worst.0 == 0.0 && worst.1 == 0 && c == coords[0]) {
                worst = (e, c, grad[c], n);
            }
        }
        checks.push(ParameterCheck {
            name,
            coords_checked: coords.len(),
            max_rel_error: worst.0,
            worst_index: worst.1,
            analytic: worst.2,
            numeric: worst.3,
            passed: worst.0 < config.tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance: config.tolerance,
        checks,
    })
}
