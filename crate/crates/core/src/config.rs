//! Scenario configuration: geometry, trajectory, noise, outliers and the
//! pipeline settings, loadable from TOML.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{Anchor, AnchorSet, ChannelMask, MeasurementBundle, NoiseProfile};
use crate::pipeline::PipelineConfig;
use crate::scenario::{
    gen_trajectory, synthesize, GroundTruth, OutlierModel, TrajectoryKind, TrajectoryProfile,
};
use crate::state::ProcessNoiseParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub trajectory: TrajectoryProfile,
    pub anchors: Vec<Anchor>,
    /// Measurement noise, used both to synthesize and to build R.
    #[serde(default)]
    pub noise: NoiseProfile,
    /// Multiplier on injected noise; 0 gives a noiseless stream.
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default)]
    pub outliers: OutlierModel,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// 2-D mode: z and vz are pinned.
    #[serde(default)]
    pub flat: bool,
}

fn one() -> f64 {
    1.0
}

/// Closed polyline through `corners` with each corner replaced by a circular
/// arc of `radius`, sampled every `step` radians.
pub fn rounded_loop(corners: &[[f64; 2]], radius: f64, z: f64, step: f64) -> Vec<[f64; 3]> {
    let n = corners.len();
    let mut out = Vec::new();
    for i in 0..n {
        let prev = corners[(i + n - 1) % n];
        let c = corners[i];
        let next = corners[(i + 1) % n];
        let unit = |a: [f64; 2], b: [f64; 2]| {
            let d = [b[0] - a[0], b[1] - a[1]];
            let l = d[0].hypot(d[1]);
            [d[0] / l, d[1] / l]
        };
        let din = unit(prev, c);
        let dout = unit(c, next);
        let turn = (din[0] * dout[1] - din[1] * dout[0]).atan2(din[0] * dout[0] + din[1] * dout[1]);
        let back = radius * (turn.abs() / 2.0).tan();
        let start = [c[0] - din[0] * back, c[1] - din[1] * back];
        // arc center lies to the left for a left turn
        let sign = turn.signum();
        let center = [
            start[0] - sign * din[1] * radius,
            start[1] + sign * din[0] * radius,
        ];
        let a0 = (start[1] - center[1]).atan2(start[0] - center[0]);
        let pieces = ((turn.abs() / step).ceil() as usize).max(1);
        for j in 0..=pieces {
            let a = a0 + turn * j as f64 / pieces as f64;
            out.push([
                center[0] + radius * a.cos(),
                center[1] + radius * a.sin(),
                z,
            ]);
        }
    }
    out
}

impl ScenarioConfig {
    /// Walking loop inside a triangle of ceiling-mounted anchors.
    pub fn pedestrian() -> Self {
        let corners = [[10.0, 10.0], [50.0, 10.0], [50.0, 40.0], [10.0, 40.0]];
        ScenarioConfig {
            seed: 0,
            trajectory: TrajectoryProfile {
                kind: TrajectoryKind::PedestrianWaypoint,
                speed_min: 0.8,
                speed_max: 1.6,
                duration: 200,
                dt: 1.0,
                waypoints: rounded_loop(&corners, 3.0, 1.5, PI / 8.0),
                heading_noise: 0.05,
                looped: true,
                ramp_epochs: 0,
                speed_period: 60.0,
                doppler_spread_coeff: 0.1,
                bias_walk_sigma: 0.01,
                initial_bias: 0.2,
            },
            anchors: vec![
                Anchor::new(1, [0.0, 0.0, 10.0]).with_channels(ChannelMask {
                    doppler: true,
                    ..ChannelMask::default()
                }),
                Anchor::new(2, [80.0, 0.0, 10.0]),
                Anchor::new(3, [30.0, 70.0, 10.0]),
            ],
            noise: NoiseProfile::default(),
            noise_scale: 1.0,
            outliers: OutlierModel::none(),
            pipeline: PipelineConfig::default(),
            flat: false,
        }
    }

    /// Gently curving 2.8 km road at 12 m/s, passing close to roadside masts
    /// so that bearings sweep quickly.
    pub fn vehicular() -> Self {
        let waypoints = (0..=140)
            .map(|i| {
                let x = 20.0 * i as f64;
                [x, 15.0 * (2.0 * PI * x / 800.0).sin(), 1.5]
            })
            .collect();
        let anchors = (0..8)
            .map(|i| {
                let side = if i % 2 == 0 { 20.0 } else { -20.0 };
                let a = Anchor::new(i + 1, [400.0 * i as f64, side, 10.0]);
                if i == 4 {
                    a.with_channels(ChannelMask {
                        doppler: true,
                        ..ChannelMask::default()
                    })
                } else {
                    a
                }
            })
            .collect();
        ScenarioConfig {
            seed: 0,
            trajectory: TrajectoryProfile {
                kind: TrajectoryKind::VehicularLane,
                speed_min: 12.0,
                speed_max: 12.0,
                duration: 200,
                dt: 1.0,
                waypoints,
                heading_noise: 0.0,
                looped: false,
                ramp_epochs: 0,
                speed_period: 60.0,
                doppler_spread_coeff: 0.1,
                bias_walk_sigma: 0.01,
                initial_bias: 0.2,
            },
            anchors,
            noise: NoiseProfile::default(),
            noise_scale: 1.0,
            outliers: OutlierModel::none(),
            pipeline: PipelineConfig {
                process_noise: ProcessNoiseParams {
                    sigma_v2_base: 0.1,
                    ..ProcessNoiseParams::default()
                },
                ..PipelineConfig::default()
            },
            flat: false,
        }
    }

    /// Straight road, speed ramping from rest to 10 m/s.
    pub fn accelerating() -> Self {
        ScenarioConfig {
            seed: 0,
            trajectory: TrajectoryProfile {
                kind: TrajectoryKind::CustomWaypoints,
                speed_min: 0.0,
                speed_max: 10.0,
                duration: 100,
                dt: 1.0,
                waypoints: vec![[0.0, 0.0, 1.5], [2000.0, 0.0, 1.5]],
                heading_noise: 0.0,
                looped: false,
                ramp_epochs: 30,
                speed_period: 60.0,
                doppler_spread_coeff: 0.1,
                bias_walk_sigma: 0.01,
                initial_bias: 0.2,
            },
            anchors: [0.0, 100.0, 200.0, 400.0, 700.0, 1000.0]
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let side = if i % 2 == 0 { 20.0 } else { -20.0 };
                    let a = Anchor::new(i as u32 + 1, [x, side, 10.0]);
                    if i == 0 {
                        a.with_channels(ChannelMask {
                            doppler: true,
                            ..ChannelMask::default()
                        })
                    } else {
                        a
                    }
                })
                .collect(),
            noise: NoiseProfile::default(),
            noise_scale: 1.0,
            outliers: OutlierModel::none(),
            pipeline: PipelineConfig::default(),
            flat: false,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "pedestrian" => Ok(Self::pedestrian()),
            "vehicular" => Ok(Self::vehicular()),
            "accelerating" => Ok(Self::accelerating()),
            other => Err(Error::invalid(format!(
                "unknown preset `{other}` (expected pedestrian, vehicular or accelerating)"
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.anchor_set()?;
        self.noise.validate()?;
        self.outliers.validate()?;
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::validation("noise_scale", "must be finite and >= 0"));
        }
        if self.flat {
            let z0 = self.trajectory.waypoints[0][2];
            if self.trajectory.waypoints.iter().any(|w| w[2] != z0) {
                return Err(Error::validation(
                    "trajectory.waypoints",
                    "flat mode needs every waypoint at the same height",
                ));
            }
        }
        self.pipeline_config().validate()
    }

    pub fn anchor_set(&self) -> Result<AnchorSet> {
        AnchorSet::new(self.anchors.clone())
    }

    /// Pipeline settings with the scenario noise and flat flag filled in.
    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.noise = self.noise.clone();
        p.flat = self.flat;
        p
    }

    /// Ground truth and measurement stream for `seed`.
    pub fn simulate(&self, seed: u64) -> Result<(GroundTruth, Vec<MeasurementBundle>)> {
        let anchors = self.anchor_set()?;
        let truth = gen_trajectory(&self.trajectory, seed)?;
        let stream = synthesize(
            &truth,
            &anchors,
            &self.noise,
            &self.outliers,
            self.noise_scale,
            seed,
        )?;
        Ok((truth, stream))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["pedestrian", "vehicular", "accelerating"] {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::preset("boat").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::vehicular();
        let text = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = r#"
            [trajectory]
            kind = "custom-waypoints"
            speed_min = 1.0
            speed_max = 1.0
            duration = 10
            waypoints = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]

            [[anchors]]
            id = 1
            position = [0.0, 5.0, 3.0]
            channels = { doppler = true }
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.pipeline.v_lm, 2.0);
        assert_eq!(cfg.pipeline.v_hm, 20.0);
        assert_eq!(cfg.pipeline.gating.confidence, 0.99);
        assert_eq!(cfg.pipeline.smoother_window, 200);
        assert_eq!(cfg.trajectory.dt, 1.0);
        assert!(cfg.anchors[0].channels.toa);
    }

    #[test]
    fn inverted_thresholds_name_both_fields() {
        let mut text = ScenarioConfig::pedestrian().to_toml_string().unwrap();
        text = text.replace("v_lm = 2.0", "v_lm = 30.0");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Validation { .. }));
        assert!(
            msg.contains("pipeline.v_lm") && msg.contains("pipeline.v_hm"),
            "{msg}"
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ScenarioConfig::pedestrian().to_toml_string().unwrap();
        text.push_str("\n[extra]\nx = 1\n");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rounded_loop_stays_near_corners() {
        let pts = rounded_loop(
            &[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
            2.0,
            1.0,
            0.2,
        );
        for p in &pts {
            assert!(p[0] >= -1e-9 && p[0] <= 10.0 + 1e-9 && p[1] >= -1e-9 && p[1] <= 10.0 + 1e-9);
            assert_eq!(p[2], 1.0);
        }
        // every arc is tangent to both edges of its corner
        assert!((pts[0][1] - 0.0).abs() < 1e-9 || (pts[0][0] - 0.0).abs() < 1e-9);
    }
}
