//! Kinematic state, constant-velocity transition and Doppler-scaled process
//! noise.
//!
//! The state is `[x, y, z, vx, vy, vz, b]`: position in metres, velocity in
//! m/s and the Doppler/oscillator bias carried in m/s-equivalent. A bias in Hz
//! converts with [`bias_ms_to_hz`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

pub const STATE_DIM: usize = 7;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Column offsets into the state vector.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const VX: usize = 3;
    pub const VY: usize = 4;
    pub const VZ: usize = 5;
    pub const BIAS: usize = 6;
}

/// Converts a radial-velocity-equivalent bias to a carrier frequency offset.
pub fn bias_ms_to_hz(bias_ms: f64, carrier_hz: f64) -> f64 {
    bias_ms * carrier_hz / SPEED_OF_LIGHT
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn new(position: [f64; 3], velocity: [f64; 3], bias: f64) -> Self {
        let [x, y, z] = position;
        let [vx, vy, vz] = velocity;
        StateVector([x, y, z, vx, vy, vz, bias])
    }

    pub fn position(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn bias(&self) -> f64 {
        self.0[idx::BIAS]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.0)
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != STATE_DIM {
            return Err(Error::invalid(format!(
                "state vector must have {STATE_DIM} components, got {}",
                values.len()
            )));
        }
        let mut out = [0.0; STATE_DIM];
        out.copy_from_slice(values);
        let s = StateVector(out);
        if !s.is_finite() {
            return Err(Error::invalid("state vector has non-finite components"));
        }
        Ok(s)
    }
}

/// Gaussian belief: mean, covariance and the epoch it refers to.
///
/// The filters are written against arbitrary dimension so they can be checked
/// on small linear systems; the localization pipeline always uses
/// [`STATE_DIM`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub epoch: usize,
}

impl StateEstimate {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, epoch: usize) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::invalid(format!(
                "covariance is {}x{} but mean has {n} components",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("estimate mean has non-finite components"));
        }
        Ok(StateEstimate { mean, cov, epoch })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The 7-D mean as a [`StateVector`]. Errors on other dimensions.
    pub fn state(&self) -> Result<StateVector> {
        StateVector::from_slice(self.mean.as_slice())
    }

    pub fn speed(&self) -> f64 {
        if self.dim() < 6 {
            return 0.0;
        }
        (self.mean[idx::VX].powi(2) + self.mean[idx::VY].powi(2) + self.mean[idx::VZ].powi(2))
            .sqrt()
    }
}

/// Constant-velocity transition for a fixed sampling interval.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    pub f: DMatrix<f64>,
    pub dt: f64,
}

impl TransitionModel {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x
    }
}

pub fn build_transition(dt: f64) -> Result<TransitionModel> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    let mut f = DMatrix::identity(STATE_DIM, STATE_DIM);
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    Ok(TransitionModel { f, dt })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessNoiseParams {
    /// Horizontal position variance (m²).
    pub sigma_p2: f64,
    /// Vertical position variance (m²).
    pub sigma_pz2: f64,
    /// Horizontal velocity variance at zero Doppler spread (m²/s²).
    pub sigma_v2_base: f64,
    /// Vertical velocity variance at zero Doppler spread (m²/s²).
    pub sigma_vz2_base: f64,
    /// Bias random-walk variance.
    pub sigma_b2: f64,
    /// Velocity variances grow as `base * (1 + kappa_d * doppler_spread)`.
    pub kappa_d: f64,
}

impl Default for ProcessNoiseParams {
    fn default() -> Self {
        ProcessNoiseParams {
            sigma_p2: 0.01,
            sigma_pz2: 0.001,
            sigma_v2_base: 0.2,
            sigma_vz2_base: 0.001,
            sigma_b2: 1e-4,
            kappa_d: 1.0,
        }
    }
}

impl ProcessNoiseParams {
    /// Pins the vertical channel: zero vertical position and velocity noise.
    pub fn flat(mut self) -> Self {
        self.sigma_pz2 = 0.0;
        self.sigma_vz2_base = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_p2", self.sigma_p2),
            ("sigma_pz2", self.sigma_pz2),
            ("sigma_v2_base", self.sigma_v2_base),
            ("sigma_vz2_base", self.sigma_vz2_base),
            ("sigma_b2", self.sigma_b2),
            ("kappa_d", self.kappa_d),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(
                    format!("process_noise.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

pub fn build_process_noise(
    params: &ProcessNoiseParams,
    doppler_spread: f64,
) -> Result<DMatrix<f64>> {
    if !(doppler_spread >= 0.0) || !doppler_spread.is_finite() {
        return Err(Error::invalid(format!(
            "doppler spread must be finite and >= 0, got {doppler_spread}"
        )));
    }
    let scale = 1.0 + params.kappa_d * doppler_spread;
    let sv2 = params.sigma_v2_base * scale;
    let svz2 = params.sigma_vz2_base * scale;
    Ok(DMatrix::from_diagonal(&DVector::from_row_slice(&[
        params.sigma_p2,
        params.sigma_p2,
        params.sigma_pz2,
        sv2,
        sv2,
        svz2,
        params.sigma_b2,
    ])))
}

/// Linear prediction `F x`, `F P F^T + Q`.
pub fn propagate(
    est: &StateEstimate,
    model: &TransitionModel,
    q: &DMatrix<f64>,
) -> Result<StateEstimate> {
    let n = est.dim();
    if model.f.nrows() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: state {n}, F {}x{}, Q {}x{}",
            model.f.nrows(),
            model.f.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let mean = &model.f * &est.mean;
    let mut cov = &model.f * &est.cov * model.f.transpose() + q;
    symmetrize(&mut cov);
    Ok(StateEstimate {
        mean,
        cov,
        epoch: est.epoch + 1,
    })
}
