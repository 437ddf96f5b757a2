use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::Parameter;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are matched to parameters by
/// position, so callers must always pass parameters in the same order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update and zeroes every gradient. Nothing is modified if
    /// any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        self.step_scaled(params, |_| 1.0)
    }

    /// [`Adam::step`] with the learning rate of each parameter multiplied by
    /// `rate_scale(name)`.
    pub fn step_scaled(
        &mut self,
        params: &mut [&mut Parameter],
        rate_scale: impl Fn(&str) -> f64,
    ) -> Result<()> {
        if let Some(bad) = params.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::NonFiniteGradient(bad.name.clone()));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.value.len())
        {
            return Err(Error::Shape {
                context: "adam",
                detail: "parameter set changed between steps".to_string(),
            });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let correction1 = 1.0 - libm::pow(beta1, t);
        let correction2 = 1.0 - libm::pow(beta2, t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let rate = learning_rate * rate_scale(&p.name);
            let Parameter { value, grad, .. } = &mut **p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
            grad.fill(0.0);
        }
        Ok(())
    }
}
