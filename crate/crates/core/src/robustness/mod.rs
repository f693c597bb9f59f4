//! Innovation gating, adaptive noise scaling and fixed-interval smoothing.

mod adapt;
mod chi2;
mod gating;
mod smoother;

pub use adapt::{AdaptationConfig, AdaptationState, GAMMA_MAX, GAMMA_MIN};
pub use chi2::{chi2_cdf, chi2_quantile, gamma_p, ln_gamma};
pub use gating::{gate, nis, per_channel_outliers, worst_channel, GateConfig, GateOutcome};
pub use smoother::{rts_smooth, smooth_windows, SmootherEpoch, SmootherInput};
