//! Speed-gated hybrid tracking loop.
//!
//! Per epoch: predict with the active branch's filter (γ-scaled Q), classify
//! on the predicted speed, hand the estimate to the branch for the new mode,
//! gate, update (γ-scaled R), then feed the NIS to the adaptive scale. After
//! the forward pass the trajectory is smoothed window by window.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{MetricReport, NeesSubspace};
use crate::filters::{FilterKind, GateDecision, UkfParams, UpdateResult};
use crate::measurement::{
    assemble_r, AnchorSet, Channel, MeasurementBundle, NoiseProfile, StackedModel,
};
use crate::robustness::{
    per_channel_outliers, smooth_windows, worst_channel, AdaptationConfig, AdaptationState,
    GateConfig, SmootherEpoch,
};
use crate::scenario::GroundTruth;
use crate::state::{
    build_process_noise, build_transition, idx, ProcessNoiseParams, StateEstimate, TransitionModel,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityMode {
    LowMobility,
    HighMobility,
    OutOfRange,
}

impl MobilityMode {
    pub fn name(self) -> &'static str {
        match self {
            MobilityMode::LowMobility => "LowMobility",
            MobilityMode::HighMobility => "HighMobility",
            MobilityMode::OutOfRange => "OutOfRange",
        }
    }
}

/// Which estimator the pipeline runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterChoice {
    Ekf,
    Ukf,
    Ckf,
    /// EKF in low mobility, UKF otherwise.
    Hybrid,
}

impl FilterChoice {
    pub fn for_mode(self, mode: MobilityMode) -> FilterKind {
        match self {
            FilterChoice::Ekf => FilterKind::Ekf,
            FilterChoice::Ukf => FilterKind::Ukf,
            FilterChoice::Ckf => FilterKind::Ckf,
            FilterChoice::Hybrid => match mode {
                MobilityMode::LowMobility => FilterKind::Ekf,
                MobilityMode::HighMobility | MobilityMode::OutOfRange => FilterKind::Ukf,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterChoice::Ekf => "ekf",
            FilterChoice::Ukf => "ukf",
            FilterChoice::Ckf => "ckf",
            FilterChoice::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for FilterChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ekf" => Ok(FilterChoice::Ekf),
            "ukf" => Ok(FilterChoice::Ukf),
            "ckf" => Ok(FilterChoice::Ckf),
            "hybrid" => Ok(FilterChoice::Hybrid),
            other => Err(Error::invalid(format!("unknown filter `{other}`"))),
        }
    }
}

/// Initial belief: truth at the first epoch plus a fixed perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub position_offset: [f64; 3],
    pub velocity_offset: [f64; 3],
    pub bias_offset: f64,
    pub position_var: f64,
    pub velocity_var: f64,
    pub bias_var: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            position_offset: [1.0, 1.0, 1.0],
            velocity_offset: [0.0; 3],
            bias_offset: 0.0,
            position_var: 10.0,
            velocity_var: 1.0,
            bias_var: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter: FilterChoice,
    /// Low-mobility ceiling (m/s).
    pub v_lm: f64,
    /// High-mobility ceiling (m/s).
    pub v_hm: f64,
    /// Hysteresis half-band around `v_lm` (m/s).
    pub hysteresis: f64,
    pub gating_enabled: bool,
    pub adaptation_enabled: bool,
    pub smoothing_enabled: bool,
    /// Smoother window in epochs.
    pub smoother_window: usize,
    pub gating: GateConfig,
    pub adaptation: AdaptationConfig,
    pub ukf: UkfParams,
    /// Noise the filter assumes when building R. Taken from the scenario.
    #[serde(skip)]
    pub noise: NoiseProfile,
    pub process_noise: ProcessNoiseParams,
    pub init: InitConfig,
    /// Pin z and vz (flat terrain). Taken from the scenario.
    #[serde(skip)]
    pub flat: bool,
    /// Odometry heading is dropped below this predicted horizontal speed.
    pub min_heading_speed: f64,
    /// Fixed scale when adaptation is off.
    pub fixed_gamma: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            filter: FilterChoice::Hybrid,
            v_lm: 2.0,
            v_hm: 20.0,
            hysteresis: 0.2,
            gating_enabled: true,
            adaptation_enabled: true,
            smoothing_enabled: true,
            smoother_window: 200,
            gating: GateConfig::default(),
            adaptation: AdaptationConfig::default(),
            ukf: UkfParams::default(),
            noise: NoiseProfile::default(),
            process_noise: ProcessNoiseParams::default(),
            init: InitConfig::default(),
            flat: false,
            min_heading_speed: 0.5,
            fixed_gamma: 1.0,
        }
    }
}

impl PipelineConfig {
    /// All robustness layers off: the plain filter.
    pub fn plain(filter: FilterChoice) -> Self {
        PipelineConfig {
            filter,
            gating_enabled: false,
            adaptation_enabled: false,
            smoothing_enabled: false,
            ..Default::default()
        }
    }

    /// Gating, adaptation and smoothing on.
    pub fn optimized(filter: FilterChoice) -> Self {
        PipelineConfig {
            filter,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_lm > 0.0) || !(self.v_lm < self.v_hm) || !self.v_hm.is_finite() {
            return Err(Error::validation(
                "pipeline.v_lm, pipeline.v_hm",
                format!(
                    "need 0 < v_lm < v_hm, got v_lm = {} and v_hm = {}",
                    self.v_lm, self.v_hm
                ),
            ));
        }
        if !(self.hysteresis >= 0.0) || !(self.hysteresis < self.v_lm) {
            return Err(Error::validation(
                "pipeline.hysteresis",
                format!("need 0 <= hysteresis < v_lm, got {}", self.hysteresis),
            ));
        }
        if self.smoother_window == 0 {
            return Err(Error::validation(
                "pipeline.smoother_window",
                "must be >= 1",
            ));
        }
        if !(self.fixed_gamma > 0.0) {
            return Err(Error::validation("pipeline.fixed_gamma", "must be > 0"));
        }
        if !(self.min_heading_speed >= 0.0) {
            return Err(Error::validation(
                "pipeline.min_heading_speed",
                "must be >= 0",
            ));
        }
        let init = &self.init;
        if !(init.position_var > 0.0 && init.velocity_var > 0.0 && init.bias_var > 0.0) {
            return Err(Error::validation("pipeline.init", "variances must be > 0"));
        }
        self.gating.validate()?;
        self.adaptation.validate()?;
        self.ukf.validate(crate::state::STATE_DIM)?;
        self.noise.validate()?;
        self.process_noise.validate()?;
        Ok(())
    }

    fn effective_process_noise(&self) -> ProcessNoiseParams {
        if self.flat {
            self.process_noise.clone().flat()
        } else {
            self.process_noise.clone()
        }
    }

    pub fn nees_subspace(&self) -> NeesSubspace {
        if self.flat {
            NeesSubspace::Horizontal
        } else {
            NeesSubspace::Position
        }
    }
}

pub fn estimate_speed(pred: &StateEstimate) -> f64 {
    pred.speed()
}

/// Speed-gated mode selection with hysteresis around `v_lm`. Without a
/// previous mode the thresholds apply as is.
pub fn classify(
    speed: f64,
    prev: Option<MobilityMode>,
    cfg: &PipelineConfig,
) -> Result<MobilityMode> {
    if !(speed >= 0.0) {
        return Err(Error::invalid(format!("speed must be >= 0, got {speed}")));
    }
    if speed > cfg.v_hm {
        return Ok(MobilityMode::OutOfRange);
    }
    let low_ceiling = match prev {
        None => cfg.v_lm,
        Some(MobilityMode::LowMobility) => cfg.v_lm + cfg.hysteresis,
        Some(MobilityMode::HighMobility | MobilityMode::OutOfRange) => cfg.v_lm - cfg.hysteresis,
    };
    Ok(if speed <= low_ceiling {
        MobilityMode::LowMobility
    } else {
        MobilityMode::HighMobility
    })
}

/// Both branches share the 7-D parameterization, so handing over is the
/// identity.
pub fn handoff(est: &StateEstimate, _from: MobilityMode, _to: MobilityMode) -> StateEstimate {
    est.clone()
}

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub mode: MobilityMode,
    pub filter: FilterKind,
    pub predicted: StateEstimate,
    pub posterior: StateEstimate,
    pub innovation: DVector<f64>,
    pub nis: f64,
    pub dof: usize,
    pub gate: GateDecision,
    /// Channels dropped by per-channel gating.
    pub rejected_channels: usize,
    /// Scale applied to Q and R at this epoch.
    pub gamma: f64,
    pub switched: bool,
    pub out_of_range: bool,
    pub failure: Option<String>,
    /// Transition and process noise used to predict into this epoch.
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Initial estimate from the first true state.
pub fn initial_estimate(
    truth0: &crate::state::StateVector,
    cfg: &PipelineConfig,
) -> Result<StateEstimate> {
    let init = &cfg.init;
    let mut mean = truth0.to_dvector();
    for i in 0..3 {
        mean[i] += init.position_offset[i];
        mean[3 + i] += init.velocity_offset[i];
    }
    mean[idx::BIAS] += init.bias_offset;
    let mut diag = vec![
        init.position_var,
        init.position_var,
        init.position_var,
        init.velocity_var,
        init.velocity_var,
        init.velocity_var,
        init.bias_var,
    ];
    if cfg.flat {
        mean[idx::Z] = truth0.0[idx::Z];
        mean[idx::VZ] = 0.0;
        diag[idx::Z] = 0.0;
        diag[idx::VZ] = 0.0;
    }
    StateEstimate::new(mean, DMatrix::from_diagonal(&DVector::from_vec(diag)), 0)
}

/// One tracked UE: the current belief plus adaptation state and the log.
pub struct Track {
    cfg: PipelineConfig,
    anchors: AnchorSet,
    model: TransitionModel,
    process: ProcessNoiseParams,
    estimate: StateEstimate,
    mode: MobilityMode,
    adaptation: Option<AdaptationState>,
    rejection_run: usize,
    logs: Vec<EpochLog>,
}

impl Track {
    pub fn new(
        cfg: PipelineConfig,
        anchors: AnchorSet,
        dt: f64,
        initial: StateEstimate,
    ) -> Result<Self> {
        cfg.validate()?;
        let model = build_transition(dt)?;
        let mode = classify(initial.speed(), None, &cfg)?;
        let adaptation = if cfg.adaptation_enabled {
            Some(AdaptationState::new(&cfg.adaptation)?)
        } else {
            None
        };
        let process = cfg.effective_process_noise();
        Ok(Track {
            cfg,
            anchors,
            model,
            process,
            estimate: initial,
            mode,
            adaptation,
            rejection_run: 0,
            logs: Vec::new(),
        })
    }

    pub fn estimate(&self) -> &StateEstimate {
        &self.estimate
    }

    pub fn mode(&self) -> MobilityMode {
        self.mode
    }

    pub fn logs(&self) -> &[EpochLog] {
        &self.logs
    }

    pub fn into_logs(self) -> Vec<EpochLog> {
        self.logs
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn gamma(&self) -> f64 {
        match &self.adaptation {
            Some(a) => a.gamma(),
            None => self.cfg.fixed_gamma,
        }
    }

    fn usable(
        &self,
        bundle: &MeasurementBundle,
        mode: MobilityMode,
        pred: &StateEstimate,
    ) -> MeasurementBundle {
        let horizontal_speed = pred.mean[idx::VX].hypot(pred.mean[idx::VY]);
        let min_heading = self.cfg.min_heading_speed;
        bundle.filtered(|slot| {
            if slot.channel.is_odometry() && mode != MobilityMode::LowMobility {
                return false;
            }
            if slot.channel == Channel::OdoHeading && horizontal_speed < min_heading {
                return false;
            }
            if let Some(id) = slot.anchor {
                if self.anchors.get(id).is_none() {
                    return false;
                }
            }
            true
        })
    }

    fn update(
        &self,
        kind: FilterKind,
        pred: &StateEstimate,
        bundle: &MeasurementBundle,
        gamma: f64,
    ) -> Result<(UpdateResult, usize)> {
        let gate = self.cfg.gating_enabled.then_some(&self.cfg.gating);
        let layout = bundle.layout();
        let z = bundle.values();
        let r = assemble_r(&self.cfg.noise, &layout) * gamma;
        let h = StackedModel {
            anchors: &self.anchors,
            layout: &layout,
        };
        let Some(g) = gate else {
            return Ok((kind.update(pred, &z, &h, &r, &self.cfg.ukf, None)?, 0));
        };
        if g.recovery_after > 0 && self.rejection_run >= g.recovery_after {
            // re-acquire a track the gate has locked out
            return Ok((kind.update(pred, &z, &h, &r, &self.cfg.ukf, None)?, 0));
        }
        if g.per_channel {
            let probe = kind.update(pred, &z, &h, &r, &self.cfg.ukf, None)?;
            let flags = per_channel_outliers(&probe.innovation, &probe.s, g)?;
            let dropped = flags.iter().filter(|f| **f).count();
            if dropped == 0 {
                return Ok((
                    UpdateResult {
                        gate: GateDecision::Accept,
                        ..probe
                    },
                    0,
                ));
            }
            let kept = bundle.filtered(|s| !flags[layout.iter().position(|l| l == s).unwrap()]);
            if kept.is_empty() {
                return Ok((
                    UpdateResult {
                        posterior: pred.clone(),
                        gate: GateDecision::Reject,
                        ..probe
                    },
                    dropped,
                ));
            }
            let res = self.update_subset(kind, pred, &kept, gamma, None)?;
            return Ok((
                UpdateResult {
                    gate: GateDecision::Accept,
                    ..res
                },
                dropped,
            ));
        }
        let mut res = kind.update(pred, &z, &h, &r, &self.cfg.ukf, Some(g))?;
        let mut kept = bundle.clone();
        let mut dropped = 0;
        while !res.gate.accepted() && dropped < g.max_exclusions && kept.len() > 1 {
            let Some(worst) = worst_channel(&res.innovation, &res.s, g)? else {
                break;
            };
            let slot = kept.layout()[worst];
            kept = kept.filtered(|s| *s != slot);
            dropped += 1;
            res = self.update_subset(kind, pred, &kept, gamma, Some(g))?;
        }
        if !res.gate.accepted() {
            dropped = 0;
        }
        Ok((res, dropped))
    }

    fn update_subset(
        &self,
        kind: FilterKind,
        pred: &StateEstimate,
        bundle: &MeasurementBundle,
        gamma: f64,
        gate: Option<&GateConfig>,
    ) -> Result<UpdateResult> {
        let layout = bundle.layout();
        let r = assemble_r(&self.cfg.noise, &layout) * gamma;
        let h = StackedModel {
            anchors: &self.anchors,
            layout: &layout,
        };
        kind.update(pred, &bundle.values(), &h, &r, &self.cfg.ukf, gate)
    }

    /// Processes one epoch. Numerical failures in the update are logged and
    /// the epoch falls back to its prediction; failures in the prediction
    /// abort the track.
    pub fn step(&mut self, bundle: &MeasurementBundle) -> Result<&EpochLog> {
        let gamma = self.gamma();
        let first = self.logs.is_empty();
        let predict_kind = self.cfg.filter.for_mode(self.mode);
        let n = self.estimate.dim();

        let (pred, f, q) = if first {
            // the initial belief already refers to the first epoch
            let mut p = self.estimate.clone();
            p.epoch = bundle.epoch;
            (p, DMatrix::identity(n, n), DMatrix::zeros(n, n))
        } else {
            let q = build_process_noise(&self.process, bundle.doppler_spread.max(0.0))? * gamma;
            let mut p = predict_kind.predict(&self.estimate, &self.model, &q, &self.cfg.ukf)?;
            p.epoch = bundle.epoch;
            (p, self.model.f.clone(), q)
        };
        if pred.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite prediction at epoch {}",
                bundle.epoch
            )));
        }

        let speed = estimate_speed(&pred);
        let mode = classify(speed, Some(self.mode), &self.cfg)?;
        let switched = mode != self.mode;
        let pred = if switched {
            handoff(&pred, self.mode, mode)
        } else {
            pred
        };
        let out_of_range = mode == MobilityMode::OutOfRange;
        if out_of_range {
            warn!(
                "epoch {}: speed {speed:.2} m/s outside design window, falling back to UKF",
                bundle.epoch
            );
        }
        let kind = self.cfg.filter.for_mode(mode);
        let usable = self.usable(bundle, mode, &pred);

        let (posterior, innovation, nis, dof, gate, rejected, failure) =
            match self.update(kind, &pred, &usable, gamma) {
                Ok((res, rejected)) => {
                    let dof = res.innovation.len();
                    (
                        res.posterior,
                        res.innovation,
                        res.nis,
                        dof,
                        res.gate,
                        rejected,
                        None,
                    )
                }
                Err(e @ (Error::NumericalFailure(_) | Error::DegenerateGeometry(_))) => {
                    warn!("epoch {}: update skipped: {e}", bundle.epoch);
                    (
                        pred.clone(),
                        DVector::zeros(0),
                        0.0,
                        0,
                        GateDecision::Reject,
                        0,
                        Some(e.to_string()),
                    )
                }
                Err(e) => return Err(e),
            };
        if posterior.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite posterior at epoch {}",
                bundle.epoch
            )));
        }

        if gate == GateDecision::Reject && failure.is_none() {
            self.rejection_run += 1;
        } else {
            self.rejection_run = 0;
        }
        if let Some(adapt) = self.adaptation.as_mut() {
            if gate.accepted() && failure.is_none() && dof > 0 {
                adapt.adapt(nis, dof);
            }
        }

        self.estimate = posterior.clone();
        self.mode = mode;
        self.logs.push(EpochLog {
            epoch: bundle.epoch,
            mode,
            filter: kind,
            predicted: pred,
            posterior,
            innovation,
            nis,
            dof,
            gate,
            rejected_channels: rejected,
            gamma,
            switched,
            out_of_range,
            failure,
            f,
            q,
        });
        Ok(self.logs.last().unwrap())
    }

    /// Runs every bundle in order, stopping at the first unrecoverable error.
    pub fn run_stream(&mut self, stream: &[MeasurementBundle]) -> Result<()> {
        for b in stream {
            self.step(b)?;
        }
        Ok(())
    }
}

/// Builds smoother input from a forward-pass log.
pub fn smoother_epochs(logs: &[EpochLog]) -> Vec<SmootherEpoch> {
    logs.iter()
        .enumerate()
        .map(|(k, log)| {
            let next = logs.get(k + 1);
            let n = log.posterior.dim();
            let mut filtered = log.posterior.clone();
            filtered.epoch = k;
            let predicted_next = next.map(|n| n.predicted.clone());
            SmootherEpoch {
                filtered,
                predicted_next,
                f: next
                    .map(|n| n.f.clone())
                    .unwrap_or_else(|| DMatrix::identity(n, n)),
                q: next
                    .map(|n| n.q.clone())
                    .unwrap_or_else(|| DMatrix::zeros(n, n)),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub filter: FilterChoice,
    pub logs: Vec<EpochLog>,
    pub filtered: Vec<StateEstimate>,
    pub smoothed: Vec<StateEstimate>,
    pub filtered_metrics: MetricReport,
    /// Present when smoothing ran.
    pub smoothed_metrics: Option<MetricReport>,
    pub mode_histogram: BTreeMap<MobilityMode, usize>,
    pub mode_transitions: usize,
    pub gate_rejection_rate: f64,
    pub failures: usize,
}

impl RunReport {
    /// Metrics of the final output: smoothed when available.
    pub fn metrics(&self) -> &MetricReport {
        self.smoothed_metrics
            .as_ref()
            .unwrap_or(&self.filtered_metrics)
    }

    pub fn final_trajectory(&self) -> &[StateEstimate] {
        &self.smoothed
    }
}

/// Forward pass, windowed smoothing and metrics.
pub fn run(
    cfg: &PipelineConfig,
    anchors: &AnchorSet,
    truth: &GroundTruth,
    stream: &[MeasurementBundle],
) -> Result<RunReport> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    if truth.len() != stream.len() {
        return Err(Error::invalid(format!(
            "truth has {} epochs but the stream has {}",
            truth.len(),
            stream.len()
        )));
    }
    let initial = initial_estimate(&truth.states[0], cfg)?;
    let mut track = Track::new(cfg.clone(), anchors.clone(), truth.dt, initial)?;
    track.run_stream(stream)?;
    finish(cfg, truth, track.into_logs())
}

/// Assembles a report from a complete forward log.
pub fn finish(cfg: &PipelineConfig, truth: &GroundTruth, logs: Vec<EpochLog>) -> Result<RunReport> {
    let filtered: Vec<StateEstimate> = logs.iter().map(|l| l.posterior.clone()).collect();
    let smoothed = if cfg.smoothing_enabled {
        let mut s = smooth_windows(&smoother_epochs(&logs), cfg.smoother_window)?;
        for (est, log) in s.iter_mut().zip(&logs) {
            est.epoch = log.epoch;
        }
        s
    } else {
        filtered.clone()
    };
    let mut histogram = BTreeMap::new();
    for l in &logs {
        *histogram.entry(l.mode).or_insert(0) += 1;
    }
    let transitions = logs.iter().filter(|l| l.switched).count();
    let rejected = logs
        .iter()
        .filter(|l| l.gate == GateDecision::Reject)
        .count();
    let rejection_rate = rejected as f64 / logs.len() as f64;
    let failures = logs.iter().filter(|l| l.failure.is_some()).count();
    let subspace = cfg.nees_subspace();
    let filtered_metrics = MetricReport::compute(
        &filtered,
        &truth.states,
        subspace,
        transitions,
        rejection_rate,
    )?;
    let smoothed_metrics = if cfg.smoothing_enabled {
        Some(MetricReport::compute(
            &smoothed,
            &truth.states,
            subspace,
            transitions,
            rejection_rate,
        )?)
    } else {
        None
    };
    Ok(RunReport {
        filter: cfg.filter,
        logs,
        filtered,
        smoothed,
        filtered_metrics,
        smoothed_metrics,
        mode_histogram: histogram,
        mode_transitions: transitions,
        gate_rejection_rate: rejection_rate,
        failures,
    })
}
