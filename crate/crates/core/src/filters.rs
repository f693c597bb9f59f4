//! EKF, UKF and CKF over a shared predict/update contract.
//!
//! The three filters share everything except how the predicted measurement,
//! innovation covariance `S` and state/measurement cross-covariance `P_xz`
//! are formed. The EKF linearizes `h` at the prior mean and uses a Joseph-form
//! covariance update; the sigma-point filters push a deterministic point set
//! through `h` and use `P - K S K^T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, quadratic_form, right_solve, spd_factor, symmetrize};
use crate::measurement::wrap_angle;
use crate::robustness::{chi2_quantile, GateConfig};
use crate::state::{propagate, StateEstimate, TransitionModel};

/// Observation function `z = h(x)`.
pub trait MeasurementFunction {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Angular rows have their residuals wrapped to `(-pi, pi]`.
    fn is_angular(&self, _row: usize) -> bool {
        false
    }
}

/// `h(x) = H x`, used for oracle comparisons.
#[derive(Clone, Debug)]
pub struct LinearMeasurement {
    pub h: DMatrix<f64>,
}

impl MeasurementFunction for LinearMeasurement {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.h.ncols() {
            return Err(Error::invalid("state dimension does not match H"));
        }
        Ok(&self.h * x)
    }

    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.h.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 1.0,
            beta: 2.0,
            kappa: 3.0,
        }
    }
}

impl UkfParams {
    pub fn lambda(&self, n: usize) -> f64 {
        self.alpha * self.alpha * (n as f64 + self.kappa) - n as f64
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::validation("ukf.alpha", "must be > 0"));
        }
        if !(n as f64 + self.lambda(n) > 0.0) {
            return Err(Error::validation(
                "ukf.kappa",
                format!("n + lambda must be positive (n = {n})"),
            ));
        }
        Ok(())
    }
}

/// Deterministic point set with mean and covariance weights.
#[derive(Clone, Debug)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl SigmaSet {
    pub fn mean(&self) -> DVector<f64> {
        let n = self.points[0].len();
        self.points
            .iter()
            .zip(&self.wm)
            .fold(DVector::zeros(n), |acc, (p, w)| acc + p * *w)
    }

    /// Weighted sample covariance about `mean`.
    pub fn covariance(&self, mean: &DVector<f64>) -> DMatrix<f64> {
        let n = mean.len();
        let mut cov = DMatrix::zeros(n, n);
        for (p, w) in self.points.iter().zip(&self.wc) {
            let d = p - mean;
            cov += &d * d.transpose() * *w;
        }
        symmetrize(&mut cov);
        cov
    }

    pub fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> SigmaSet {
        SigmaSet {
            points: self.points.iter().map(f).collect(),
            wm: self.wm.clone(),
            wc: self.wc.clone(),
        }
    }
}

/// Scaled unscented sigma set: `2n + 1` points, point 0 at the mean.
pub fn sigma_points(est: &StateEstimate, params: &UkfParams) -> Result<SigmaSet> {
    let n = est.dim();
    params.validate(n)?;
    let lambda = params.lambda(n);
    let spread = n as f64 + lambda;
    let root = psd_sqrt(&(&est.cov * spread))?;
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(est.mean.clone());
    for i in 0..n {
        points.push(&est.mean + root.column(i));
    }
    for i in 0..n {
        points.push(&est.mean - root.column(i));
    }
    let w0 = lambda / spread;
    let wi = 1.0 / (2.0 * spread);
    let mut wm = vec![wi; 2 * n + 1];
    let mut wc = vec![wi; 2 * n + 1];
    wm[0] = w0;
    wc[0] = w0 + (1.0 - params.alpha * params.alpha + params.beta);
    Ok(SigmaSet { points, wm, wc })
}

/// Third-degree spherical-radial cubature set: `2n` equally weighted points
/// at `mean ± sqrt(n) * col_i(sqrt(P))`.
pub fn cubature_points(est: &StateEstimate) -> Result<SigmaSet> {
    let n = est.dim();
    let root = psd_sqrt(&est.cov)? * (n as f64).sqrt();
    let mut points = Vec::with_capacity(2 * n);
    for i in 0..n {
        points.push(&est.mean + root.column(i));
    }
    for i in 0..n {
        points.push(&est.mean - root.column(i));
    }
    let w = 1.0 / (2 * n) as f64;
    Ok(SigmaSet {
        points,
        wm: vec![w; 2 * n],
        wc: vec![w; 2 * n],
    })
}

/// Unscented prediction through the (linear) transition.
pub fn ukf_predict(
    est: &StateEstimate,
    model: &TransitionModel,
    q: &DMatrix<f64>,
    params: &UkfParams,
) -> Result<StateEstimate> {
    let n = est.dim();
    if model.f.nrows() != n || q.nrows() != n {
        return Err(Error::invalid("dimension mismatch in ukf_predict"));
    }
    let set = sigma_points(est, params)?.map(|p| model.apply(p));
    let mean = set.mean();
    let mut cov = set.covariance(&mean) + q;
    symmetrize(&mut cov);
    Ok(StateEstimate {
        mean,
        cov,
        epoch: est.epoch + 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Accept,
    Reject,
    /// Gating was switched off for this update.
    Ungated,
}

impl GateDecision {
    pub fn accepted(self) -> bool {
        self != GateDecision::Reject
    }
}

#[derive(Clone, Debug)]
pub struct UpdateResult {
    pub posterior: StateEstimate,
    pub predicted_z: DVector<f64>,
    pub innovation: DVector<f64>,
    pub s: DMatrix<f64>,
    pub nis: f64,
    pub gate: GateDecision,
}

fn check_layout(
    pred: &StateEstimate,
    z: &DVector<f64>,
    h: &dyn MeasurementFunction,
    r: &DMatrix<f64>,
) -> Result<()> {
    let d = h.dim();
    if z.len() != d || r.nrows() != d || r.ncols() != d {
        return Err(Error::invalid(format!(
            "measurement layout mismatch: z {}, h {d}, R {}x{}",
            z.len(),
            r.nrows(),
            r.ncols()
        )));
    }
    if pred.cov.nrows() != pred.dim() {
        return Err(Error::invalid("prior covariance does not match mean"));
    }
    Ok(())
}

fn residual(z: &DVector<f64>, z_hat: &DVector<f64>, h: &dyn MeasurementFunction) -> DVector<f64> {
    let mut y = z - z_hat;
    for i in 0..y.len() {
        if h.is_angular(i) {
            y[i] = wrap_angle(y[i]);
        }
    }
    y
}

/// Shared tail of every update: NIS, gate, gain, mean correction. `joseph`
/// carries `(H, R)` for the EKF's Joseph-form covariance.
fn correct(
    pred: &StateEstimate,
    predicted_z: DVector<f64>,
    y: DVector<f64>,
    s: DMatrix<f64>,
    pxz: DMatrix<f64>,
    joseph: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    gate: Option<&GateConfig>,
) -> Result<UpdateResult> {
    if y.is_empty() {
        return Ok(UpdateResult {
            posterior: pred.clone(),
            predicted_z,
            innovation: y,
            s,
            nis: 0.0,
            gate: GateDecision::Ungated,
        });
    }
    let factor = spd_factor(&s, "innovation covariance")?;
    let nis = quadratic_form(&y, &factor);
    let decision = match gate {
        None => GateDecision::Ungated,
        Some(cfg) => {
            if nis < chi2_quantile(y.len(), cfg.confidence)? {
                GateDecision::Accept
            } else {
                GateDecision::Reject
            }
        }
    };
    if decision == GateDecision::Reject {
        return Ok(UpdateResult {
            posterior: pred.clone(),
            predicted_z,
            innovation: y,
            s,
            nis,
            gate: decision,
        });
    }
    let k = right_solve(&pxz, &factor);
    let mean = &pred.mean + &k * &y;
    let mut cov = match joseph {
        Some((h, r)) => {
            let n = pred.dim();
            let a = DMatrix::identity(n, n) - &k * h;
            &a * &pred.cov * a.transpose() + &k * r * k.transpose()
        }
        None => &pred.cov - &k * &s * k.transpose(),
    };
    symmetrize(&mut cov);
    Ok(UpdateResult {
        posterior: StateEstimate {
            mean,
            cov,
            epoch: pred.epoch,
        },
        predicted_z,
        innovation: y,
        s,
        nis,
        gate: decision,
    })
}

pub fn ekf_update(
    pred: &StateEstimate,
    z: &DVector<f64>,
    h: &dyn MeasurementFunction,
    r: &DMatrix<f64>,
    gate: Option<&GateConfig>,
) -> Result<UpdateResult> {
    check_layout(pred, z, h, r)?;
    let z_hat = h.evaluate(&pred.mean)?;
    let jac = h.jacobian(&pred.mean)?;
    ekf_update_linearized(pred, z, &z_hat, &jac, h, r, gate)
}

/// EKF update with a caller-supplied prediction and Jacobian.
pub fn ekf_update_linearized(
    pred: &StateEstimate,
    z: &DVector<f64>,
    z_hat: &DVector<f64>,
    jac: &DMatrix<f64>,
    h: &dyn MeasurementFunction,
    r: &DMatrix<f64>,
    gate: Option<&GateConfig>,
) -> Result<UpdateResult> {
    if jac.nrows() != z.len() || jac.ncols() != pred.dim() {
        return Err(Error::invalid("Jacobian shape does not match layout"));
    }
    let y = residual(z, z_hat, h);
    let pht = &pred.cov * jac.transpose();
    let mut s = jac * &pht + r;
    symmetrize(&mut s);
    correct(pred, z_hat.clone(), y, s, pht, Some((jac, r)), gate)
}

fn sigma_update(
    pred: &StateEstimate,
    set: &SigmaSet,
    z: &DVector<f64>,
    h: &dyn MeasurementFunction,
    r: &DMatrix<f64>,
    gate: Option<&GateConfig>,
) -> Result<UpdateResult> {
    let d = h.dim();
    let n = pred.dim();
    let zeta: Vec<DVector<f64>> = set
        .points
        .iter()
        .map(|p| h.evaluate(p))
        .collect::<Result<_>>()?;
    let reference = &zeta[0];
    // angular rows are averaged as wrapped offsets from the first point's projection
    let mut z_hat = DVector::zeros(d);
    for (zi, w) in zeta.iter().zip(&set.wm) {
        z_hat += residual(zi, reference, h) * *w;
    }
    z_hat += reference;
    for i in 0..d {
        if h.is_angular(i) {
            z_hat[i] = wrap_angle(z_hat[i]);
        }
    }
    let mut s = r.clone();
    let mut pxz = DMatrix::zeros(n, d);
    for ((xi, zi), w) in set.points.iter().zip(&zeta).zip(&set.wc) {
        let dz = residual(zi, &z_hat, h);
        let dx = xi - &pred.mean;
        s += &dz * dz.transpose() * *w;
        pxz += &dx * dz.transpose() * *w;
    }
    symmetrize(&mut s);
    let y = residual(z, &z_hat, h);
    correct(pred, z_hat, y, s, pxz, None, gate)
}

pub fn ukf_update(
    pred: &StateEstimate,
    z: &DVector<f64>,
    h: &dyn MeasurementFunction,
    r: &DMatrix<f64>,
    params: &UkfParams,
    gate: Option<&GateConfig>,
) -> Result<UpdateResult> {
    check_layout(pred, z, h, r)?;
    let set = sigma_points(pred, params)?;
    sigma_update(pred, &set, z, h, r, gate)
}

pub fn ckf_update(
    pred: &StateEstimate,
    z: &DVector<f64>,
    h: &dyn MeasurementFunction,
    r: &DMatrix<f64>,
    gate: Option<&GateConfig>,
) -> Result<UpdateResult> {
    check_layout(pred, z, h, r)?;
    let set = cubature_points(pred)?;
    sigma_update(pred, &set, z, h, r, gate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ekf,
    Ukf,
    Ckf,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ekf => "EKF",
            FilterKind::Ukf => "UKF",
            FilterKind::Ckf => "CKF",
        }
    }

    /// EKF and CKF predict linearly; the UKF pushes its sigma set through F.
    pub fn predict(
        self,
        est: &StateEstimate,
        model: &TransitionModel,
        q: &DMatrix<f64>,
        params: &UkfParams,
    ) -> Result<StateEstimate> {
        match self {
            FilterKind::Ekf | FilterKind::Ckf => propagate(est, model, q),
            FilterKind::Ukf => ukf_predict(est, model, q, params),
        }
    }

    pub fn update(
        self,
        pred: &StateEstimate,
        z: &DVector<f64>,
        h: &dyn MeasurementFunction,
        r: &DMatrix<f64>,
        params: &UkfParams,
        gate: Option<&GateConfig>,
    ) -> Result<UpdateResult> {
        match self {
            FilterKind::Ekf => ekf_update(pred, z, h, r, gate),
            FilterKind::Ukf => ukf_update(pred, z, h, r, params, gate),
            FilterKind::Ckf => ckf_update(pred, z, h, r, gate),
        }
    }
}
