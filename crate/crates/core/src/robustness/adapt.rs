use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GAMMA_MIN: f64 = 0.5;
pub const GAMMA_MAX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    /// Sliding window length in epochs.
    pub window: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            window: 20,
            gamma_min: GAMMA_MIN,
            gamma_max: GAMMA_MAX,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::validation("adaptation.window", "must be >= 1"));
        }
        if !(self.gamma_min > 0.0
            && self.gamma_min <= 1.0
            && self.gamma_max >= 1.0
            && self.gamma_max.is_finite())
        {
            return Err(Error::validation(
                "adaptation.gamma_min",
                format!(
                    "bounds must satisfy 0 < gamma_min <= 1 <= gamma_max, got [{}, {}]",
                    self.gamma_min, self.gamma_max
                ),
            ));
        }
        Ok(())
    }
}

/// Windowed NIS consistency tracker producing the joint Q/R scale `gamma`.
///
/// Each epoch pushes `gamma_used * NIS / d`: the NIS referred back to unit
/// scale, since `S` grows roughly linearly with the scale that produced it.
/// Once the window is full, `gamma` is the clamped window mean and is
/// re-evaluated every epoch as the window slides.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationState {
    window: usize,
    buffer: VecDeque<f64>,
    gamma: f64,
    min: f64,
    max: f64,
}

impl AdaptationState {
    pub fn new(cfg: &AdaptationConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdaptationState {
            window: cfg.window,
            buffer: VecDeque::with_capacity(cfg.window),
            gamma: 1.0,
            min: cfg.gamma_min,
            max: cfg.gamma_max,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_warm(&self) -> bool {
        self.buffer.len() == self.window
    }

    /// Feeds the latest NIS of a `dof`-dimensional innovation and returns the
    /// scale to use from the next epoch on.
    pub fn adapt(&mut self, latest_nis: f64, dof: usize) -> f64 {
        if dof == 0 || !latest_nis.is_finite() {
            return self.gamma;
        }
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(self.gamma * latest_nis / dof as f64);
        if self.buffer.len() == self.window {
            let mean = self.buffer.iter().sum::<f64>() / self.window as f64;
            self.gamma = mean.clamp(self.min, self.max);
        }
        self.gamma
    }
}
