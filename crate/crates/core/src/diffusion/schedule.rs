use customnet_autograd::{Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// Linear-β schedule. Timesteps are 1-based: `t ∈ [1, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub config: ScheduleConfig,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("steps", "schedule needs at least one step"));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(
            "beta",
            format!("need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"),
        ));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        config: ScheduleConfig {
            steps,
            beta_start,
            beta_end,
        },
        beta,
        alpha,
        alpha_bar,
    })
}

impl NoiseSchedule {
    pub fn from_config(c: &ScheduleConfig) -> Result<Self> {
        make_schedule(c.steps, c.beta_start, c.beta_end)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid("t", format!("{t} outside [1, {}]", self.steps())));
        }
        Ok(())
    }
}

/// `√ᾱ_t · z0 + √(1 − ᾱ_t) · eps` for a timestep of the schedule.
pub fn q_sample<F: Real>(z0: &Tensor<F>, t: usize, eps: &Tensor<F>, schedule: &NoiseSchedule) -> Result<Tensor<F>> {
    schedule.check_t(t)?;
    if z0.shape() != eps.shape() {
        return Err(Error::invalid("eps", "noise shape differs from z0"));
    }
    let ab = schedule.alpha_bar(t);
    Ok(q_sample_with(z0, ab, eps))
}

pub fn q_sample_with<F: Real>(z0: &Tensor<F>, alpha_bar: f64, eps: &Tensor<F>) -> Tensor<F> {
    let a = F::from_f64(alpha_bar.sqrt());
    let b = F::from_f64((1.0 - alpha_bar).sqrt());
    z0.zip_map(eps, |z, e| a * z + b * e)
}
