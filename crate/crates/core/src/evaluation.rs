//! Trajectory metrics: ATE, RMSE, RPE and NEES.
//!
//! No frame alignment is applied: anchors fix the global frame, so estimated
//! and true trajectories are compared as they are.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinned_indices, quadratic_form, spd_factor};
use crate::state::{StateEstimate, StateVector};

pub type Position = [f64; 3];

fn dist(a: &Position, b: &Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_lengths(est: &[Position], truth: &[Position]) -> Result<()> {
    if est.len() != truth.len() {
        return Err(Error::invalid(format!(
            "trajectory lengths differ: {} estimated vs {} true",
            est.len(),
            truth.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::invalid("trajectories are empty"));
    }
    Ok(())
}

pub fn position_errors(est: &[Position], truth: &[Position]) -> Result<Vec<f64>> {
    check_lengths(est, truth)?;
    Ok(est.iter().zip(truth).map(|(a, b)| dist(a, b)).collect())
}

/// Mean Euclidean position error.
pub fn ate(est: &[Position], truth: &[Position]) -> Result<f64> {
    let e = position_errors(est, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Root-mean-square position error.
pub fn rmse(est: &[Position], truth: &[Position]) -> Result<f64> {
    let e = position_errors(est, truth)?;
    Ok((e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
}

/// Mean displacement error over `delta`-epoch steps.
pub fn rpe(est: &[Position], truth: &[Position], delta: usize) -> Result<f64> {
    Ok(mean(&rpe_series(est, truth, delta)?))
}

pub fn rpe_series(est: &[Position], truth: &[Position], delta: usize) -> Result<Vec<f64>> {
    if est.len() != truth.len() {
        return Err(Error::invalid("trajectory lengths differ"));
    }
    if delta == 0 || est.len() < delta + 1 {
        return Err(Error::invalid(format!(
            "RPE over {delta} epochs needs at least {} samples, got {}",
            delta + 1,
            est.len()
        )));
    }
    Ok((0..est.len() - delta)
        .map(|k| {
            let de: Vec<f64> = (0..3).map(|i| est[k + delta][i] - est[k][i]).collect();
            let dt: Vec<f64> = (0..3).map(|i| truth[k + delta][i] - truth[k][i]).collect();
            (0..3).map(|i| (de[i] - dt[i]).powi(2)).sum::<f64>().sqrt()
        })
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// State components entering NEES.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NeesSubspace {
    /// x, y, z.
    #[default]
    Position,
    /// x, y (flat-terrain mode).
    Horizontal,
    /// All seven states, minus any pinned by construction.
    Full,
}

impl NeesSubspace {
    fn indices(self) -> Vec<usize> {
        match self {
            NeesSubspace::Position => vec![0, 1, 2],
            NeesSubspace::Horizontal => vec![0, 1],
            NeesSubspace::Full => (0..7).collect(),
        }
    }
}

/// Per-epoch NEES `e^T P^-1 e` on the chosen subspace and its mean.
pub fn nees(
    estimates: &[StateEstimate],
    truth: &[StateVector],
    subspace: NeesSubspace,
) -> Result<(Vec<f64>, f64)> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::invalid(
            "estimate and truth series must be equally long and non-empty",
        ));
    }
    let mut series = Vec::with_capacity(estimates.len());
    for (est, tr) in estimates.iter().zip(truth) {
        let mut idx = subspace.indices();
        if subspace == NeesSubspace::Full {
            let pinned = pinned_indices(&est.cov);
            idx.retain(|i| !pinned.contains(i));
        }
        let n = idx.len();
        let e = DVector::from_fn(n, |i, _| est.mean[idx[i]] - tr.0[idx[i]]);
        let p = DMatrix::from_fn(n, n, |i, j| est.cov[(idx[i], idx[j])]);
        let f = spd_factor(&p, "estimate covariance")?;
        series.push(quadratic_form(&e, &f));
    }
    let m = mean(&series);
    Ok((series, m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ate: f64,
    pub rpe: f64,
    pub rmse: f64,
    pub nees_mean: f64,
    pub nees_series: Vec<f64>,
    pub position_errors: Vec<f64>,
    pub mode_transitions: usize,
    pub gate_rejection_rate: f64,
}

impl MetricReport {
    pub fn compute(
        estimates: &[StateEstimate],
        truth: &[StateVector],
        subspace: NeesSubspace,
        mode_transitions: usize,
        gate_rejection_rate: f64,
    ) -> Result<Self> {
        let est_pos: Vec<Position> = estimates
            .iter()
            .map(|e| [e.mean[0], e.mean[1], e.mean[2]])
            .collect();
        let true_pos: Vec<Position> = truth.iter().map(|t| t.position()).collect();
        let errors = position_errors(&est_pos, &true_pos)?;
        let ate = mean(&errors);
        let rmse = (errors.iter().map(|v| v * v).sum::<f64>() / errors.len() as f64).sqrt();
        let rpe = if est_pos.len() >= 2 {
            rpe(&est_pos, &true_pos, 1)?
        } else {
            0.0
        };
        let (nees_series, nees_mean) = nees(estimates, truth, subspace)?;
        Ok(MetricReport {
            ate,
            rpe,
            rmse,
            nees_mean,
            nees_series,
            position_errors: errors,
            mode_transitions,
            gate_rejection_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn ate_and_rmse_examples() {
        let t = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(ate(&t, &t).unwrap(), 0.0);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let shifted: Vec<Position> = t.iter().map(|p| [p[0] + 1.0, p[1], p[2]]).collect();
        assert_eq!(ate(&shifted, &t).unwrap(), 1.0);
        let est = vec![[3.0, 0.0, 0.0], [1.0, 4.0, 0.0]];
        assert_eq!(ate(&est, &t).unwrap(), 3.5);
        assert!((rmse(&est, &t).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(ate(&est[..1], &t).is_err());
    }

    #[test]
    fn rpe_examples() {
        let t: Vec<Position> = (0..5).map(|k| [k as f64, 0.0, 0.0]).collect();
        assert_eq!(rpe(&t, &t, 1).unwrap(), 0.0);
        let offset: Vec<Position> = t.iter().map(|p| [p[0] + 3.0, p[1] - 2.0, p[2]]).collect();
        assert!(rpe(&offset, &t, 1).unwrap().abs() < 1e-12);
        let drift: Vec<Position> = t
            .iter()
            .enumerate()
            .map(|(k, p)| [p[0] + 0.1 * k as f64, p[1], p[2]])
            .collect();
        assert!((rpe(&drift, &t, 1).unwrap() - 0.1).abs() < 1e-12);
        assert!(rpe(&t[..1], &t[..1], 1).is_err());
    }

    fn est_with(mean: [f64; 7], cov: DMatrix<f64>) -> StateEstimate {
        StateEstimate::new(DVector::from_row_slice(&mean), cov, 0).unwrap()
    }

    #[test]
    fn nees_examples() {
        let truth = vec![StateVector([0.0; 7])];
        let (_, m) = nees(
            &[est_with([0.0; 7], DMatrix::identity(7, 7))],
            &truth,
            NeesSubspace::Position,
        )
        .unwrap();
        assert_eq!(m, 0.0);
        let e = est_with([1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0], DMatrix::identity(7, 7));
        let (_, m) = nees(&[e], &truth, NeesSubspace::Position).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
        let singular = est_with([1.0; 7], DMatrix::zeros(7, 7));
        assert!(matches!(
            nees(&[singular], &truth, NeesSubspace::Position),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn consistent_scalar_nees_mean() {
        // error ~ N(0, P) reported with covariance P: NEES ~ chi2(1) restricted to x
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 2.0).unwrap();
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[
            4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
        ]));
        let mut ests = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..10_000 {
            let mut m = [0.0; 7];
            m[0] = n.sample(&mut rng);
            ests.push(est_with(m, cov.clone()));
            truth.push(StateVector([0.0; 7]));
        }
        let idx_x = |e: &StateEstimate| e.mean[0] * e.mean[0] / e.cov[(0, 0)];
        let mean_x = ests.iter().map(idx_x).sum::<f64>() / ests.len() as f64;
        assert!((0.94..=1.06).contains(&mean_x), "{mean_x}");
        let (_, m) = nees(&ests, &truth, NeesSubspace::Position).unwrap();
        assert!((m - mean_x).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metric_invariants(
            est in proptest::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..40),
            shift in prop::array::uniform3(-10.0f64..10.0),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 3.0).unwrap();
            let truth: Vec<Position> = est.iter().map(|p| [p[0] + n.sample(&mut rng), p[1] + n.sample(&mut rng), p[2]]).collect();
            let a = ate(&est, &truth).unwrap();
            let r = rmse(&est, &truth).unwrap();
            prop_assert!(a <= r + 1e-12);

            let moved: Vec<Position> = est.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect();
            prop_assert!((rpe(&moved, &truth, 1).unwrap() - rpe(&est, &truth, 1).unwrap()).abs() < 1e-9);

            let rev_e: Vec<Position> = est.iter().rev().copied().collect();
            let rev_t: Vec<Position> = truth.iter().rev().copied().collect();
            prop_assert!((ate(&rev_e, &rev_t).unwrap() - a).abs() < 1e-9);
            prop_assert!((rmse(&rev_e, &rev_t).unwrap() - r).abs() < 1e-9);
        }
    }
}
