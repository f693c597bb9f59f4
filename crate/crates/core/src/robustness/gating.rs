use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::chi2::chi2_quantile;
use crate::error::{Error, Result};
use crate::linalg::{quadratic_form, spd_factor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Acceptance probability of the chi-square gate.
    pub confidence: f64,
    /// Gate each channel on its own marginal instead of the whole bundle.
    pub per_channel: bool,
    /// When a bundle fails, up to this many channels are excluded one at a
    /// time (largest normalized innovation first) and the remainder gated
    /// again. 0 discards failing bundles whole.
    pub max_exclusions: usize,
    /// After this many consecutive rejections the next bundle is applied
    /// ungated, so a drifted track can re-acquire. 0 disables.
    pub recovery_after: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            confidence: 0.99,
            per_channel: false,
            max_exclusions: 3,
            recovery_after: 3,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::validation(
                "gating.confidence",
                format!("must lie in (0, 1), got {}", self.confidence),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateOutcome {
    Accept { nis: f64, threshold: f64 },
    Reject { nis: f64, threshold: f64 },
}

impl GateOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self, GateOutcome::Accept { .. })
    }
}

/// Normalized innovation squared `y^T S^-1 y`.
pub fn nis(y: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if s.nrows() != y.len() || s.ncols() != y.len() {
        return Err(Error::invalid(
            "innovation and covariance dimensions differ",
        ));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let f = spd_factor(s, "innovation covariance")?;
    Ok(quadratic_form(y, &f))
}

pub fn gate(y: &DVector<f64>, s: &DMatrix<f64>, cfg: &GateConfig) -> Result<GateOutcome> {
    let value = nis(y, s)?;
    if y.is_empty() {
        return Ok(GateOutcome::Accept {
            nis: 0.0,
            threshold: f64::INFINITY,
        });
    }
    let threshold = chi2_quantile(y.len(), cfg.confidence)?;
    Ok(if value < threshold {
        GateOutcome::Accept {
            nis: value,
            threshold,
        }
    } else {
        GateOutcome::Reject {
            nis: value,
            threshold,
        }
    })
}

/// Marks elements whose marginal `y_i^2 / S_ii` exceeds the one-dof gate.
pub fn per_channel_outliers(
    y: &DVector<f64>,
    s: &DMatrix<f64>,
    cfg: &GateConfig,
) -> Result<Vec<bool>> {
    let threshold = chi2_quantile(1, cfg.confidence)?;
    (0..y.len())
        .map(|i| {
            let v = s[(i, i)];
            if !(v > 0.0) {
                return Err(Error::numerical("non-positive innovation variance"));
            }
            Ok(y[i] * y[i] / v >= threshold)
        })
        .collect()
}

/// Channel with the largest normalized innovation `y_i^2 / S_ii`, if that
/// value fails the 1-dof gate.
pub fn worst_channel(
    y: &DVector<f64>,
    s: &DMatrix<f64>,
    cfg: &GateConfig,
) -> Result<Option<usize>> {
    let threshold = chi2_quantile(1, cfg.confidence)?;
    let mut worst: Option<(usize, f64)> = None;
    for i in 0..y.len() {
        let v = s[(i, i)];
        if !(v > 0.0) {
            return Err(Error::numerical("non-positive innovation variance"));
        }
        let r = y[i] * y[i] / v;
        if worst.is_none_or(|(_, w)| r > w) {
            worst = Some((i, r));
        }
    }
    Ok(worst.filter(|(_, r)| *r >= threshold).map(|(i, _)| i))
}
