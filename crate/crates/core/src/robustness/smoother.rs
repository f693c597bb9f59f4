use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{right_solve_free, symmetrize};
use crate::state::StateEstimate;

/// One epoch of forward-filter output as seen by the backward pass.
///
/// `predicted_next`, `f` and `q` describe the transition *out of* this epoch
/// into the next one, exactly as the filter applied it. They are `None` /
/// unused on the final epoch of a window.
#[derive(Clone, Debug)]
pub struct SmootherEpoch {
    pub filtered: StateEstimate,
    pub predicted_next: Option<StateEstimate>,
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SmootherInput {
    pub epochs: Vec<SmootherEpoch>,
}

/// Rauch-Tung-Striebel backward pass over one contiguous window. The last
/// epoch seeds the recursion with its filtered estimate.
pub fn rts_smooth(input: &SmootherInput) -> Result<Vec<StateEstimate>> {
    let epochs = &input.epochs;
    let Some(last) = epochs.last() else {
        return Ok(Vec::new());
    };
    for w in epochs.windows(2) {
        if w[1].filtered.epoch != w[0].filtered.epoch + 1 {
            return Err(Error::invalid(format!(
                "smoother window is not contiguous at epoch {}",
                w[0].filtered.epoch
            )));
        }
    }
    let mut out = vec![last.filtered.clone(); epochs.len()];
    for k in (0..epochs.len() - 1).rev() {
        let cur = &epochs[k];
        let pred = cur.predicted_next.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "epoch {} has no prediction into the next epoch",
                cur.filtered.epoch
            ))
        })?;
        let p = &cur.filtered.cov;
        let mut p_pred = &cur.f * p * cur.f.transpose() + &cur.q;
        symmetrize(&mut p_pred);
        let cross = p * cur.f.transpose();
        let gain = right_solve_free(&cross, &p_pred, "predicted covariance")?;

        let next = &out[k + 1];
        let mean = &cur.filtered.mean + &gain * (&next.mean - &pred.mean);
        let mut cov = p + &gain * (&next.cov - &p_pred) * gain.transpose();
        symmetrize(&mut cov);
        out[k] = StateEstimate {
            mean,
            cov,
            epoch: cur.filtered.epoch,
        };
    }
    Ok(out)
}

/// Splits a trajectory into consecutive windows of `window` epochs and
/// smooths each independently. A shorter trailing window is smoothed as is.
pub fn smooth_windows(epochs: &[SmootherEpoch], window: usize) -> Result<Vec<StateEstimate>> {
    if window == 0 {
        return Err(Error::invalid("smoothing window must be >= 1"));
    }
    let mut out = Vec::with_capacity(epochs.len());
    for chunk in epochs.chunks(window) {
        let input = SmootherInput {
            epochs: chunk.to_vec(),
        };
        out.extend(rts_smooth(&input)?);
    }
    Ok(out)
}
