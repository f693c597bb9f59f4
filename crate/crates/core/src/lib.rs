//! Mobility-aware hybrid localization over mmWave ToA/AoA/AoD/Doppler
//! measurements.
//!
//! A constant-velocity state `[x, y, z, vx, vy, vz, b]` is tracked with an
//! EKF while the predicted speed is low and a UKF when it is high. The
//! estimate is guarded by χ² innovation gating, an adaptive noise scale and
//! windowed RTS smoothing. A scenario simulator and trajectory metrics make
//! the pipeline testable end to end.
//!
//! ```
//! use hybridloc::{config::ScenarioConfig, pipeline};
//!
//! let mut scenario = ScenarioConfig::pedestrian();
//! scenario.trajectory.duration = 30;
//! let (truth, stream) = scenario.simulate(7).unwrap();
//! let report = pipeline::run(&scenario.pipeline_config(), &scenario.anchor_set().unwrap(), &truth, &stream).unwrap();
//! assert_eq!(report.smoothed.len(), 30);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod filters;
pub mod linalg;
pub mod measurement;
pub mod pipeline;
pub mod robustness;
pub mod scenario;
pub mod state;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use filters::FilterKind;
pub use measurement::{Anchor, AnchorSet, Channel, MeasurementBundle, NoiseProfile};
pub use pipeline::{FilterChoice, MobilityMode, PipelineConfig, RunReport};
pub use state::{StateEstimate, StateVector};
