//! Ground-truth trajectories, synthetic measurement streams and the CSV
//! exchange format.
//!
//! CSV schema (header row, comma separated, `.` decimals, SI units):
//!
//! ```text
//! epoch,true_x,true_y,true_z,true_vx,true_vy,true_vz,true_b,doppler_spread,
//! toa_<id>,aoa_az_<id>,aoa_el_<id>,aod_<id>,   (per anchor, ascending id)
//! doppler,odo_speed,odo_heading
//! ```
//!
//! Measurement columns are optional; an absent column or an empty cell masks
//! that channel for the epoch.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    canonical_layout, predict_layout, wrap_angle, AnchorSet, Channel, MeasurementBundle,
    MeasurementEntry, NoiseProfile, Slot,
};
use crate::pipeline::MobilityMode;
use crate::state::StateVector;

/// Per-kind speed ceilings (m/s).
pub const PEDESTRIAN_MAX_SPEED: f64 = 2.0;
pub const VEHICULAR_MAX_SPEED: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    PedestrianWaypoint,
    VehicularLane,
    CustomWaypoints,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryProfile {
    pub kind: TrajectoryKind,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Number of epochs.
    pub duration: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub waypoints: Vec<[f64; 3]>,
    /// Heading wander intensity (rad/sqrt(s)).
    #[serde(default)]
    pub heading_noise: f64,
    /// Return to the first waypoint after the last one.
    #[serde(default)]
    pub looped: bool,
    /// When non-zero, speed ramps linearly from `speed_min` to `speed_max`
    /// over this many epochs and then holds.
    #[serde(default)]
    pub ramp_epochs: usize,
    /// Period (epochs) of the smooth speed oscillation used when not ramping.
    #[serde(default = "default_speed_period")]
    pub speed_period: f64,
    /// Doppler spread per unit speed (1/s).
    #[serde(default = "default_spread_coeff")]
    pub doppler_spread_coeff: f64,
    /// Per-epoch standard deviation of the true bias random walk.
    #[serde(default = "default_bias_walk")]
    pub bias_walk_sigma: f64,
    #[serde(default)]
    pub initial_bias: f64,
}

fn default_dt() -> f64 {
    1.0
}
fn default_speed_period() -> f64 {
    60.0
}
fn default_spread_coeff() -> f64 {
    0.1
}
fn default_bias_walk() -> f64 {
    0.01
}

impl TrajectoryProfile {
    pub fn straight(from: [f64; 3], to: [f64; 3], speed: f64, duration: usize) -> Self {
        TrajectoryProfile {
            kind: TrajectoryKind::CustomWaypoints,
            speed_min: speed,
            speed_max: speed,
            duration,
            dt: 1.0,
            waypoints: vec![from, to],
            heading_noise: 0.0,
            looped: false,
            ramp_epochs: 0,
            speed_period: default_speed_period(),
            doppler_spread_coeff: default_spread_coeff(),
            bias_walk_sigma: default_bias_walk(),
            initial_bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("trajectory.{f}");
        if self.duration < 2 {
            return Err(Error::validation(field("duration"), "must be >= 2"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation(field("dt"), "must be positive"));
        }
        if self.waypoints.len() < 2 {
            return Err(Error::validation(
                field("waypoints"),
                "need at least two waypoints",
            ));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation(field("waypoints"), "must be finite"));
        }
        if !(self.speed_min >= 0.0) || !(self.speed_max >= self.speed_min) {
            return Err(Error::validation(
                field("speed_min"),
                format!(
                    "need 0 <= speed_min <= speed_max, got {} and {}",
                    self.speed_min, self.speed_max
                ),
            ));
        }
        let ceiling = match self.kind {
            TrajectoryKind::PedestrianWaypoint => Some(PEDESTRIAN_MAX_SPEED),
            TrajectoryKind::VehicularLane => Some(VEHICULAR_MAX_SPEED),
            TrajectoryKind::CustomWaypoints => None,
        };
        if let Some(c) = ceiling {
            if self.speed_max > c {
                return Err(Error::validation(
                    field("speed_max"),
                    format!("{:?} profiles are limited to {c} m/s", self.kind),
                ));
            }
        }
        for (name, v) in [
            ("heading_noise", self.heading_noise),
            ("doppler_spread_coeff", self.doppler_spread_coeff),
            ("bias_walk_sigma", self.bias_walk_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(field(name), "must be finite and >= 0"));
            }
        }
        if !(self.speed_period > 0.0) {
            return Err(Error::validation(field("speed_period"), "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub states: Vec<StateVector>,
    pub doppler_spread: Vec<f64>,
    pub dt: f64,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.states.iter().map(|s| s.position()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierModel {
    /// Probability per channel per epoch.
    pub rate: f64,
    /// Outlier offset in units of the channel sigma; the sign is random and
    /// nominal noise is added on top.
    pub magnitude: f64,
    pub channels: Vec<Channel>,
}

impl Default for OutlierModel {
    fn default() -> Self {
        OutlierModel {
            rate: 0.0,
            magnitude: 10.0,
            channels: vec![Channel::Toa, Channel::AoaAz, Channel::AoaEl, Channel::Aod],
        }
    }
}

impl OutlierModel {
    pub fn none() -> Self {
        OutlierModel::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::validation("outliers.rate", "must lie in [0, 1]"));
        }
        if !(self.magnitude >= 0.0) || !self.magnitude.is_finite() {
            return Err(Error::validation(
                "outliers.magnitude",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

fn rotate_horizontal(v: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Waypoint-following constant-velocity path.
///
/// Positions integrate velocities exactly: `p[k+1] = p[k] + dt * v[k]`. The
/// heading follows the next waypoint, perturbed by a mean-reverting wander.
pub fn gen_trajectory(profile: &TrajectoryProfile, seed: u64) -> Result<GroundTruth> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random::<f64>() * 2.0 * PI;
    let dt = profile.dt;
    let wps = &profile.waypoints;
    let mid = 0.5 * (profile.speed_min + profile.speed_max);
    let amp = 0.5 * (profile.speed_max - profile.speed_min);

    let speed_at = |k: usize| -> f64 {
        if profile.ramp_epochs > 0 {
            let frac = (k as f64 / profile.ramp_epochs as f64).min(1.0);
            profile.speed_min + frac * (profile.speed_max - profile.speed_min)
        } else {
            mid + amp * (2.0 * PI * k as f64 / profile.speed_period + phase).sin()
        }
    };

    let mut pos = wps[0];
    let mut target = 1usize;
    let mut finished = false;
    let mut dir = {
        let d = sub(wps[1], wps[0]);
        let n = norm(d);
        if n > 0.0 {
            [d[0] / n, d[1] / n, d[2] / n]
        } else {
            [1.0, 0.0, 0.0]
        }
    };
    let mut wander = 0.0;
    let mut bias = profile.initial_bias;
    let mut states = Vec::with_capacity(profile.duration);
    let mut spreads = Vec::with_capacity(profile.duration);

    for k in 0..profile.duration {
        let speed = speed_at(k);
        if !finished {
            // switch to the next waypoint once it is within one step
            let mut guard = 0;
            while norm(sub(wps[target], pos)) <= speed * dt && guard < wps.len() {
                guard += 1;
                target += 1;
                if target == wps.len() {
                    if profile.looped {
                        target = 0;
                    } else {
                        finished = true;
                        break;
                    }
                }
            }
            if !finished {
                let d = sub(wps[target], pos);
                let n = norm(d);
                if n > 1e-12 {
                    dir = [d[0] / n, d[1] / n, d[2] / n];
                }
            }
        }
        let heading = rotate_horizontal(dir, wander);
        let vel = [heading[0] * speed, heading[1] * speed, heading[2] * speed];
        states.push(StateVector::new(pos, vel, bias));
        spreads.push(profile.doppler_spread_coeff * speed);

        for i in 0..3 {
            pos[i] += dt * vel[i];
        }
        let step: f64 = StandardNormal.sample(&mut rng);
        wander = 0.9 * wander + profile.heading_noise * dt.sqrt() * step;
        let b_step: f64 = StandardNormal.sample(&mut rng);
        bias += profile.bias_walk_sigma * b_step;
    }
    Ok(GroundTruth {
        states,
        doppler_spread: spreads,
        dt,
    })
}

/// Noisy measurement stream from the true states.
///
/// Every epoch carries the full low-mobility layout (all anchor channels,
/// LoS Doppler and odometry); the pipeline drops what a mode does not use.
/// `noise_scale` multiplies the injected noise (0 gives noiseless data) while
/// recorded variances stay at the nominal profile values.
pub fn synthesize(
    truth: &GroundTruth,
    anchors: &AnchorSet,
    noise: &NoiseProfile,
    outliers: &OutlierModel,
    noise_scale: f64,
    seed: u64,
) -> Result<Vec<MeasurementBundle>> {
    outliers.validate()?;
    if !(noise_scale >= 0.0) {
        return Err(Error::invalid("noise scale must be >= 0"));
    }
    // distinct stream from the trajectory generator for the same seed
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let layout = canonical_layout(anchors, MobilityMode::LowMobility);
    let mut stream = Vec::with_capacity(truth.len());
    for (k, state) in truth.states.iter().enumerate() {
        let clean = predict_layout(state, anchors, &layout).map_err(|e| match e {
            Error::DegenerateGeometry(msg) => Error::degenerate(format!("epoch {k}: {msg}")),
            other => other,
        })?;
        let mut entries = Vec::with_capacity(layout.len());
        for (i, slot) in layout.iter().enumerate() {
            let sigma = noise.sigma(slot.channel);
            let hit = outliers.rate > 0.0
                && outliers.channels.contains(&slot.channel)
                && rng.random::<f64>() < outliers.rate;
            let draw: f64 = StandardNormal.sample(&mut rng);
            let offset = if hit {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * outliers.magnitude
            } else {
                0.0
            };
            let mut value = clean[i] + noise_scale * sigma * (draw + offset);
            if slot.channel.is_angular() {
                value = wrap_angle(value);
            }
            entries.push(MeasurementEntry {
                slot: *slot,
                value,
                variance: sigma * sigma,
            });
        }
        stream.push(MeasurementBundle::new(k, entries, truth.doppler_spread[k])?);
    }
    Ok(stream)
}

fn column_name(slot: &Slot) -> String {
    match slot.anchor {
        Some(id) if slot.channel != Channel::Doppler => format!("{}_{id}", slot.channel.name()),
        _ => slot.channel.name().to_string(),
    }
}

const TRUTH_COLUMNS: [&str; 9] = [
    "epoch",
    "true_x",
    "true_y",
    "true_z",
    "true_vx",
    "true_vy",
    "true_vz",
    "true_b",
    "doppler_spread",
];

/// Writes truth and measurements in the CSV schema. Values are printed with
/// shortest round-trip formatting, so loading reproduces them exactly.
pub fn write_csv<W: Write>(
    writer: W,
    truth: &GroundTruth,
    stream: &[MeasurementBundle],
    anchors: &AnchorSet,
) -> Result<()> {
    if truth.len() != stream.len() {
        return Err(Error::invalid("truth and stream lengths differ"));
    }
    let layout = canonical_layout(anchors, MobilityMode::LowMobility);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = TRUTH_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(layout.iter().map(column_name));
    w.write_record(&header).map_err(csv_io)?;
    for (k, (state, bundle)) in truth.states.iter().zip(stream).enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(bundle.epoch.to_string());
        row.extend(state.0.iter().map(|v| v.to_string()));
        row.push(truth.doppler_spread[k].to_string());
        for slot in &layout {
            row.push(
                bundle
                    .get(slot)
                    .map(|e| e.value.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn parse_slot(name: &str, anchors: &AnchorSet) -> Result<Option<Slot>> {
    match name {
        "doppler" => return Ok(Some(Slot::anchor(anchors.los().id, Channel::Doppler))),
        "odo_speed" => return Ok(Some(Slot::odometry(Channel::OdoSpeed))),
        "odo_heading" => return Ok(Some(Slot::odometry(Channel::OdoHeading))),
        _ => {}
    }
    for ch in Channel::PER_ANCHOR {
        if let Some(rest) = name.strip_prefix(&format!("{}_", ch.name())) {
            let id: u32 = rest.parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad anchor id in column `{name}`"),
            })?;
            if anchors.get(id).is_none() {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("column `{name}` refers to unknown anchor {id}"),
                });
            }
            return Ok(Some(Slot::anchor(id, ch)));
        }
    }
    Ok(None)
}

/// Parses the CSV schema. Entry variances come from `noise`.
pub fn read_csv<R: Read>(
    reader: R,
    anchors: &AnchorSet,
    noise: &NoiseProfile,
    dt: f64,
) -> Result<(GroundTruth, Vec<MeasurementBundle>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_io)?.clone();
    let mut col: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        col.insert(h, i);
    }
    let mut truth_idx = [0usize; 9];
    for (j, name) in TRUTH_COLUMNS.iter().enumerate() {
        truth_idx[j] = *col.get(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing required column `{name}`"),
        })?;
    }
    let mut slots: Vec<(usize, Slot)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if TRUTH_COLUMNS.contains(&h) {
            continue;
        }
        match parse_slot(h, anchors)? {
            Some(slot) => slots.push((i, slot)),
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown column `{h}`"),
                })
            }
        }
    }

    let mut states = Vec::new();
    let mut spreads = Vec::new();
    let mut stream = Vec::new();
    let mut last_epoch: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64> {
            let s = field(i);
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{s}` as a number", &headers[i]),
            })
        };
        let epoch_str = field(truth_idx[0]);
        let epoch: usize = epoch_str.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad epoch `{epoch_str}`"),
        })?;
        if let Some(prev) = last_epoch {
            if epoch <= prev {
                return Err(Error::validation(
                    "epoch",
                    format!(
                        "line {line}: epochs must be strictly increasing ({prev} then {epoch})"
                    ),
                ));
            }
        }
        last_epoch = Some(epoch);
        let mut sv = [0.0; 7];
        for j in 0..7 {
            sv[j] = num(truth_idx[j + 1])?;
        }
        let spread = num(truth_idx[8])?;
        let mut entries = Vec::new();
        for (i, slot) in &slots {
            if field(*i).is_empty() {
                continue;
            }
            let sigma = noise.sigma(slot.channel);
            entries.push(MeasurementEntry {
                slot: *slot,
                value: num(*i)?,
                variance: sigma * sigma,
            });
        }
        states.push(StateVector::from_slice(&sv).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?);
        spreads.push(spread);
        stream.push(
            MeasurementBundle::new(epoch, entries, spread).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?,
        );
    }
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok((
        GroundTruth {
            states,
            doppler_spread: spreads,
            dt,
        },
        stream,
    ))
}

pub fn load_csv(
    path: impl AsRef<Path>,
    anchors: &AnchorSet,
    noise: &NoiseProfile,
    dt: f64,
) -> Result<(GroundTruth, Vec<MeasurementBundle>)> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), anchors, noise, dt)
}

pub fn save_csv(
    path: impl AsRef<Path>,
    truth: &GroundTruth,
    stream: &[MeasurementBundle],
    anchors: &AnchorSet,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), truth, stream, anchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{Anchor, AnchorKind, ChannelMask};

    fn anchors() -> AnchorSet {
        AnchorSet::new(vec![
            Anchor::new(1, [0.0, 0.0, 10.0]).with_channels(ChannelMask {
                doppler: true,
                ..Default::default()
            }),
            Anchor::new(2, [80.0, 0.0, 10.0]).with_kind(AnchorKind::Virtual),
            Anchor::new(3, [30.0, 70.0, 10.0]).with_kind(AnchorKind::Virtual),
        ])
        .unwrap()
    }

    fn walk() -> TrajectoryProfile {
        TrajectoryProfile {
            kind: TrajectoryKind::PedestrianWaypoint,
            speed_min: 0.8,
            speed_max: 1.6,
            duration: 150,
            dt: 1.0,
            waypoints: vec![
                [10.0, 10.0, 1.5],
                [50.0, 10.0, 1.5],
                [50.0, 40.0, 1.5],
                [10.0, 40.0, 1.5],
            ],
            heading_noise: 0.05,
            looped: true,
            ramp_epochs: 0,
            speed_period: 60.0,
            doppler_spread_coeff: 0.1,
            bias_walk_sigma: 0.01,
            initial_bias: 0.0,
        }
    }

    #[test]
    fn straight_line_uniform_motion() {
        let p = TrajectoryProfile {
            bias_walk_sigma: 0.0,
            ..TrajectoryProfile::straight([0.0, 0.0, 0.0], [100.0, 0.0, 0.0], 1.0, 10)
        };
        let t = gen_trajectory(&p, 3).unwrap();
        for (k, s) in t.states.iter().enumerate() {
            assert!((s.0[0] - k as f64).abs() < 1e-12);
            assert_eq!(s.0[1], 0.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            gen_trajectory(&walk(), 9).unwrap(),
            gen_trajectory(&walk(), 9).unwrap()
        );
        assert_ne!(
            gen_trajectory(&walk(), 9).unwrap(),
            gen_trajectory(&walk(), 10).unwrap()
        );
    }

    #[test]
    fn pedestrian_speed_clamp_and_kinematics() {
        let t = gen_trajectory(&walk(), 1).unwrap();
        for w in t.states.windows(2) {
            let v = w[0].velocity();
            assert!(v[0].hypot(v[1]).hypot(v[2]) <= 2.0 + 1e-12);
            for (i, vi) in v.iter().enumerate() {
                assert!((w[1].0[i] - w[0].0[i] - t.dt * vi).abs() <= 1e-9);
            }
        }
        let mut bad = walk();
        bad.speed_max = 2.5;
        assert!(matches!(
            gen_trajectory(&bad, 1),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn noiseless_stream_equals_model() {
        let t = gen_trajectory(&walk(), 4).unwrap();
        let a = anchors();
        let s = synthesize(
            &t,
            &a,
            &NoiseProfile::default(),
            &OutlierModel::none(),
            0.0,
            4,
        )
        .unwrap();
        let layout = canonical_layout(&a, MobilityMode::LowMobility);
        for (state, bundle) in t.states.iter().zip(&s) {
            assert_eq!(bundle.layout(), layout);
            let expected = predict_layout(state, &a, &layout).unwrap();
            assert_eq!(bundle.values(), expected);
        }
    }

    #[test]
    fn degenerate_epoch_is_named() {
        let p = TrajectoryProfile::straight([-5.0, 0.0, 10.0], [5.0, 0.0, 10.0], 1.0, 10);
        let t = gen_trajectory(&p, 0).unwrap();
        let err = synthesize(
            &t,
            &anchors(),
            &NoiseProfile::default(),
            &OutlierModel::none(),
            1.0,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("epoch 5"), "{err}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = gen_trajectory(&walk(), 2).unwrap();
        let a = anchors();
        let noise = NoiseProfile::default();
        let s = synthesize(&t, &a, &noise, &OutlierModel::none(), 1.0, 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &t, &s, &a).unwrap();
        let (t2, s2) = read_csv(buf.as_slice(), &a, &noise, 1.0).unwrap();
        assert_eq!(t, t2);
        assert_eq!(s, s2);
    }

    #[test]
    fn missing_doppler_column_masks_channel() {
        let t = gen_trajectory(&walk(), 2).unwrap();
        let a = anchors();
        let noise = NoiseProfile::default();
        let s = synthesize(&t, &a, &noise, &OutlierModel::none(), 1.0, 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &t, &s, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let drop = header.iter().position(|h| *h == "doppler").unwrap();
        let stripped: String = text
            .lines()
            .map(|l| {
                let mut cells: Vec<&str> = l.split(',').collect();
                cells.remove(drop);
                cells.join(",") + "\n"
            })
            .collect();
        let (_, s2) = read_csv(stripped.as_bytes(), &a, &noise, 1.0).unwrap();
        assert!(s2.iter().all(|b| b
            .entries()
            .iter()
            .all(|e| e.slot.channel != Channel::Doppler)));
        assert_eq!(s2[0].len(), s[0].len() - 1);
    }

    #[test]
    fn csv_errors() {
        let a = anchors();
        let noise = NoiseProfile::default();
        let header =
            "epoch,true_x,true_y,true_z,true_vx,true_vy,true_vz,true_b,doppler_spread,toa_1\n";
        assert!(matches!(
            read_csv(header.as_bytes(), &a, &noise, 1.0),
            Err(Error::EmptyStream)
        ));

        let bad = format!("{header}0,1,2,3,0,0,0,0,0,1e-7\n1,1,2,x,0,0,0,0,0,1e-7\n");
        match read_csv(bad.as_bytes(), &a, &noise, 1.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let backwards = format!("{header}1,1,2,3,0,0,0,0,0,1e-7\n1,1,2,3,0,0,0,0,0,\n");
        assert!(matches!(
            read_csv(backwards.as_bytes(), &a, &noise, 1.0),
            Err(Error::Validation { .. })
        ));

        let unknown = "epoch,true_x,true_y,true_z,true_vx,true_vy,true_vz,true_b,doppler_spread,toa_9\n0,1,2,3,0,0,0,0,0,1\n";
        assert!(matches!(
            read_csv(unknown.as_bytes(), &a, &noise, 1.0),
            Err(Error::Parse { .. })
        ));
    }
}
