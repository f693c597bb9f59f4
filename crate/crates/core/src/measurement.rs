//! Anchors, observation functions and measurement stacking.
//!
//! Every observation in an epoch is addressed by a [`Slot`]: the channel and,
//! for anchor-based channels, the anchor id. Stacked vectors follow one
//! canonical order so that model predictions, data, Jacobian rows and noise
//! variances line up element-wise:
//!
//! 1. per anchor (ascending id): ToA, AoA azimuth, AoA elevation, AoD
//! 2. LoS Doppler
//! 3. odometry speed, odometry heading (low-mobility mode only)

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::MeasurementFunction;
use crate::pipeline::MobilityMode;
use crate::state::{idx, StateVector, SPEED_OF_LIGHT, STATE_DIM};

/// Separations below this are treated as coincident.
const GEOMETRY_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Toa,
    AoaAz,
    AoaEl,
    Aod,
    Doppler,
    OdoSpeed,
    OdoHeading,
}

impl Channel {
    pub const PER_ANCHOR: [Channel; 4] =
        [Channel::Toa, Channel::AoaAz, Channel::AoaEl, Channel::Aod];

    pub fn is_angular(self) -> bool {
        matches!(
            self,
            Channel::AoaAz | Channel::AoaEl | Channel::Aod | Channel::OdoHeading
        )
    }

    pub fn is_odometry(self) -> bool {
        matches!(self, Channel::OdoSpeed | Channel::OdoHeading)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Toa => "toa",
            Channel::AoaAz => "aoa_az",
            Channel::AoaEl => "aoa_el",
            Channel::Aod => "aod",
            Channel::Doppler => "doppler",
            Channel::OdoSpeed => "odo_speed",
            Channel::OdoHeading => "odo_heading",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    #[default]
    Physical,
    Virtual,
}

/// Which observation types an anchor provides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelMask {
    pub toa: bool,
    pub aoa_az: bool,
    pub aoa_el: bool,
    pub aod: bool,
    pub doppler: bool,
}

impl Default for ChannelMask {
    fn default() -> Self {
        ChannelMask {
            toa: true,
            aoa_az: true,
            aoa_el: true,
            aod: true,
            doppler: false,
        }
    }
}

impl ChannelMask {
    pub fn has(&self, ch: Channel) -> bool {
        match ch {
            Channel::Toa => self.toa,
            Channel::AoaAz => self.aoa_az,
            Channel::AoaEl => self.aoa_el,
            Channel::Aod => self.aod,
            Channel::Doppler => self.doppler,
            Channel::OdoSpeed | Channel::OdoHeading => false,
        }
    }

    pub fn only(channels: &[Channel]) -> Self {
        let mut m = ChannelMask {
            toa: false,
            aoa_az: false,
            aoa_el: false,
            aod: false,
            doppler: false,
        };
        for ch in channels {
            match ch {
                Channel::Toa => m.toa = true,
                Channel::AoaAz => m.aoa_az = true,
                Channel::AoaEl => m.aoa_el = true,
                Channel::Aod => m.aod = true,
                Channel::Doppler => m.doppler = true,
                Channel::OdoSpeed | Channel::OdoHeading => {}
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub id: u32,
    #[serde(default)]
    pub name: String,
    pub position: [f64; 3],
    #[serde(default)]
    pub kind: AnchorKind,
    #[serde(default)]
    pub channels: ChannelMask,
}

impl Anchor {
    pub fn new(id: u32, position: [f64; 3]) -> Self {
        Anchor {
            id,
            name: format!("gNB{id}"),
            position,
            kind: AnchorKind::Physical,
            channels: ChannelMask::default(),
        }
    }

    pub fn with_kind(mut self, kind: AnchorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_channels(mut self, channels: ChannelMask) -> Self {
        self.channels = channels;
        self
    }
}

/// Validated anchor set, sorted by id, with exactly one Doppler (LoS) anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
    los: usize,
}

impl AnchorSet {
    pub fn new(mut anchors: Vec<Anchor>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::validation(
                "anchors",
                "at least one anchor is required",
            ));
        }
        anchors.sort_by_key(|a| a.id);
        for w in anchors.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::validation(
                    "anchors",
                    format!("duplicate anchor id {}", w[0].id),
                ));
            }
        }
        for a in &anchors {
            if a.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(
                    format!("anchors[{}].position", a.id),
                    "must be finite",
                ));
            }
        }
        let los: Vec<usize> = anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| a.channels.doppler)
            .map(|(i, _)| i)
            .collect();
        if los.len() != 1 {
            return Err(Error::validation(
                "anchors",
                format!(
                    "exactly one anchor must provide the LoS Doppler channel, found {}",
                    los.len()
                ),
            ));
        }
        Ok(AnchorSet {
            anchors,
            los: los[0],
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter()
    }

    pub fn as_slice(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn los(&self) -> &Anchor {
        &self.anchors[self.los]
    }

    pub fn get(&self, id: u32) -> Option<&Anchor> {
        self.anchors
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.anchors[i])
    }

    fn require(&self, id: u32) -> Result<&Anchor> {
        self.get(id)
            .ok_or_else(|| Error::invalid(format!("unknown anchor id {id}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseProfile {
    /// Timing noise (s).
    pub sigma_toa: f64,
    pub sigma_az: f64,
    pub sigma_el: f64,
    pub sigma_aod: f64,
    /// Doppler noise (m/s-equivalent).
    pub sigma_dop: f64,
    pub sigma_vodo: f64,
    pub sigma_hodo: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile {
            sigma_toa: 3e-9,
            sigma_az: 1f64.to_radians(),
            sigma_el: 1f64.to_radians(),
            sigma_aod: 1f64.to_radians(),
            sigma_dop: 0.5,
            sigma_vodo: 0.1,
            sigma_hodo: 2f64.to_radians(),
        }
    }
}

impl NoiseProfile {
    pub fn sigma(&self, ch: Channel) -> f64 {
        match ch {
            Channel::Toa => self.sigma_toa,
            Channel::AoaAz => self.sigma_az,
            Channel::AoaEl => self.sigma_el,
            Channel::Aod => self.sigma_aod,
            Channel::Doppler => self.sigma_dop,
            Channel::OdoSpeed => self.sigma_vodo,
            Channel::OdoHeading => self.sigma_hodo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_toa", self.sigma_toa),
            ("sigma_az", self.sigma_az),
            ("sigma_el", self.sigma_el),
            ("sigma_aod", self.sigma_aod),
            ("sigma_dop", self.sigma_dop),
            ("sigma_vodo", self.sigma_vodo),
            ("sigma_hodo", self.sigma_hodo),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(
                    format!("noise.{name}"),
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Address of one element in a stacked measurement vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub anchor: Option<u32>,
    pub channel: Channel,
}

impl Slot {
    pub fn anchor(id: u32, channel: Channel) -> Self {
        Slot {
            anchor: Some(id),
            channel,
        }
    }

    pub fn odometry(channel: Channel) -> Self {
        Slot {
            anchor: None,
            channel,
        }
    }

    /// Sort key realizing the canonical stacking order.
    fn order_key(&self) -> (u8, u32, Channel) {
        let group = match self.channel {
            Channel::Doppler => 1,
            Channel::OdoSpeed | Channel::OdoHeading => 2,
            _ => 0,
        };
        (group, self.anchor.unwrap_or(0), self.channel)
    }
}

pub type Layout = Vec<Slot>;

/// Canonical layout for an anchor set. Odometry is appended in low-mobility
/// mode only.
pub fn canonical_layout(anchors: &AnchorSet, mode: MobilityMode) -> Layout {
    let mut layout = Vec::new();
    for a in anchors.iter() {
        for ch in Channel::PER_ANCHOR {
            if a.channels.has(ch) {
                layout.push(Slot::anchor(a.id, ch));
            }
        }
    }
    layout.push(Slot::anchor(anchors.los().id, Channel::Doppler));
    if mode == MobilityMode::LowMobility {
        layout.push(Slot::odometry(Channel::OdoSpeed));
        layout.push(Slot::odometry(Channel::OdoHeading));
    }
    layout
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut w = theta.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    // rem_euclid maps -pi to pi already; this catches the 2pi rounding edge
    if w <= -PI {
        w += two_pi;
    }
    w
}

fn delta(pos: [f64; 3], anchor: &Anchor) -> [f64; 3] {
    [
        pos[0] - anchor.position[0],
        pos[1] - anchor.position[1],
        pos[2] - anchor.position[2],
    ]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn horizontal(d: [f64; 3]) -> f64 {
    d[0].hypot(d[1])
}

pub fn toa(pos: [f64; 3], anchor: &Anchor) -> Result<f64> {
    let r = norm3(delta(pos, anchor));
    if r < GEOMETRY_EPS {
        return Err(Error::degenerate(format!(
            "position coincides with anchor {}",
            anchor.id
        )));
    }
    Ok(r / SPEED_OF_LIGHT)
}

/// AoA azimuth and elevation at the UE.
pub fn aoa(pos: [f64; 3], anchor: &Anchor) -> Result<(f64, f64)> {
    Ok((aoa_azimuth(pos, anchor)?, aoa_elevation(pos, anchor)?))
}

pub fn aoa_azimuth(pos: [f64; 3], anchor: &Anchor) -> Result<f64> {
    let d = delta(pos, anchor);
    if horizontal(d) < GEOMETRY_EPS {
        return Err(Error::degenerate(format!(
            "zero horizontal separation from anchor {}",
            anchor.id
        )));
    }
    Ok(wrap_angle(d[1].atan2(d[0])))
}

pub fn aoa_elevation(pos: [f64; 3], anchor: &Anchor) -> Result<f64> {
    let d = delta(pos, anchor);
    if norm3(d) < GEOMETRY_EPS {
        return Err(Error::degenerate(format!(
            "position coincides with anchor {}",
            anchor.id
        )));
    }
    Ok(d[2].atan2(horizontal(d)))
}

pub fn aod(pos: [f64; 3], anchor: &Anchor) -> Result<f64> {
    let d = delta(pos, anchor);
    if horizontal(d) < GEOMETRY_EPS {
        return Err(Error::degenerate(format!(
            "zero horizontal separation from anchor {}",
            anchor.id
        )));
    }
    Ok(wrap_angle((-d[1]).atan2(-d[0])))
}

/// Radial velocity with respect to the LoS anchor plus bias (m/s-equivalent).
pub fn doppler_los(pos: [f64; 3], vel: [f64; 3], bias: f64, anchor: &Anchor) -> Result<f64> {
    let d = delta(pos, anchor);
    let r = norm3(d);
    if r < GEOMETRY_EPS {
        return Err(Error::degenerate(format!(
            "position coincides with LoS anchor {}",
            anchor.id
        )));
    }
    Ok((vel[0] * d[0] + vel[1] * d[1] + vel[2] * d[2]) / r + bias)
}

/// Horizontal speed and heading. Heading is 0 when the UE is stationary.
pub fn odometry(state: &StateVector) -> (f64, f64) {
    let [vx, vy, _] = state.velocity();
    let speed = vx.hypot(vy);
    let heading = if speed < 1e-9 { 0.0 } else { vy.atan2(vx) };
    (speed, heading)
}

fn predict_slot(x: &StateVector, anchors: &AnchorSet, slot: &Slot) -> Result<f64> {
    let pos = x.position();
    match slot.channel {
        Channel::OdoSpeed => Ok(odometry(x).0),
        Channel::OdoHeading => Ok(odometry(x).1),
        ch => {
            let id = slot
                .anchor
                .ok_or_else(|| Error::invalid(format!("{} slot without anchor", ch.name())))?;
            let a = anchors.require(id)?;
            match ch {
                Channel::Toa => toa(pos, a),
                Channel::AoaAz => aoa_azimuth(pos, a),
                Channel::AoaEl => aoa_elevation(pos, a),
                Channel::Aod => aod(pos, a),
                Channel::Doppler => doppler_los(pos, x.velocity(), x.bias(), a),
                _ => unreachable!(),
            }
        }
    }
}

fn jacobian_row(x: &StateVector, anchors: &AnchorSet, slot: &Slot) -> Result<[f64; STATE_DIM]> {
    let mut row = [0.0; STATE_DIM];
    let [vx, vy, vz] = x.velocity();
    match slot.channel {
        Channel::OdoSpeed => {
            let s = vx.hypot(vy);
            if s >= 1e-9 {
                row[idx::VX] = vx / s;
                row[idx::VY] = vy / s;
            }
            return Ok(row);
        }
        Channel::OdoHeading => {
            let s2 = vx * vx + vy * vy;
            if s2 < 1e-18 {
                return Err(Error::degenerate(
                    "heading Jacobian undefined at zero speed",
                ));
            }
            row[idx::VX] = -vy / s2;
            row[idx::VY] = vx / s2;
            return Ok(row);
        }
        _ => {}
    }
    let id = slot
        .anchor
        .ok_or_else(|| Error::invalid(format!("{} slot without anchor", slot.channel.name())))?;
    let a = anchors.require(id)?;
    let d = delta(x.position(), a);
    let r = norm3(d);
    let rho = horizontal(d);
    if r < GEOMETRY_EPS {
        return Err(Error::degenerate(format!(
            "position coincides with anchor {id}"
        )));
    }
    match slot.channel {
        Channel::Toa => {
            for i in 0..3 {
                row[i] = d[i] / (SPEED_OF_LIGHT * r);
            }
        }
        Channel::AoaAz | Channel::Aod => {
            if rho < GEOMETRY_EPS {
                return Err(Error::degenerate(format!(
                    "zero horizontal separation from anchor {id}"
                )));
            }
            let rho2 = rho * rho;
            row[idx::X] = -d[1] / rho2;
            row[idx::Y] = d[0] / rho2;
        }
        Channel::AoaEl => {
            if rho < GEOMETRY_EPS {
                return Err(Error::degenerate(format!(
                    "zero horizontal separation from anchor {id}"
                )));
            }
            let r2 = r * r;
            row[idx::X] = -d[2] * d[0] / (r2 * rho);
            row[idx::Y] = -d[2] * d[1] / (r2 * rho);
            row[idx::Z] = rho / r2;
        }
        Channel::Doppler => {
            let v = [vx, vy, vz];
            let radial = (v[0] * d[0] + v[1] * d[1] + v[2] * d[2]) / r;
            for i in 0..3 {
                row[i] = (v[i] - radial * d[i] / r) / r;
                row[3 + i] = d[i] / r;
            }
            row[idx::BIAS] = 1.0;
        }
        Channel::OdoSpeed | Channel::OdoHeading => unreachable!(),
    }
    Ok(row)
}

pub fn predict_layout(
    x: &StateVector,
    anchors: &AnchorSet,
    layout: &[Slot],
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(layout.len());
    for (i, slot) in layout.iter().enumerate() {
        out[i] = predict_slot(x, anchors, slot)?;
    }
    Ok(out)
}

pub fn jacobian_layout(
    x: &StateVector,
    anchors: &AnchorSet,
    layout: &[Slot],
) -> Result<DMatrix<f64>> {
    let mut h = DMatrix::zeros(layout.len(), STATE_DIM);
    for (i, slot) in layout.iter().enumerate() {
        let row = jacobian_row(x, anchors, slot)?;
        for (j, v) in row.iter().enumerate() {
            h[(i, j)] = *v;
        }
    }
    Ok(h)
}

/// Predicted measurement vector in canonical order, with its layout.
pub fn stack_predicted(
    state: &StateVector,
    anchors: &AnchorSet,
    mode: MobilityMode,
) -> Result<(DVector<f64>, Layout)> {
    let layout = canonical_layout(anchors, mode);
    let z = predict_layout(state, anchors, &layout)?;
    Ok((z, layout))
}

/// Jacobian of [`stack_predicted`], rows in the same order.
pub fn jacobian(
    state: &StateVector,
    anchors: &AnchorSet,
    mode: MobilityMode,
) -> Result<DMatrix<f64>> {
    jacobian_layout(state, anchors, &canonical_layout(anchors, mode))
}

pub fn assemble_r(profile: &NoiseProfile, layout: &[Slot]) -> DMatrix<f64> {
    let vars: Vec<f64> = layout
        .iter()
        .map(|s| profile.sigma(s.channel).powi(2))
        .collect();
    DMatrix::from_diagonal(&DVector::from_vec(vars))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub slot: Slot,
    pub value: f64,
    pub variance: f64,
}

/// One epoch of observations in canonical order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MeasurementBundle {
    pub epoch: usize,
    entries: Vec<MeasurementEntry>,
    /// Doppler spread driving the process-noise scaling at this epoch.
    pub doppler_spread: f64,
}

impl MeasurementBundle {
    pub fn new(
        epoch: usize,
        mut entries: Vec<MeasurementEntry>,
        doppler_spread: f64,
    ) -> Result<Self> {
        for e in &entries {
            if !(e.variance > 0.0) || !e.variance.is_finite() {
                return Err(Error::invalid(format!(
                    "epoch {epoch}: {} variance must be > 0",
                    e.slot.channel.name()
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::invalid(format!(
                    "epoch {epoch}: non-finite {} value",
                    e.slot.channel.name()
                )));
            }
        }
        entries.sort_by_key(|e| e.slot.order_key());
        for w in entries.windows(2) {
            if w[0].slot == w[1].slot {
                return Err(Error::invalid(format!(
                    "epoch {epoch}: duplicate {} entry",
                    w[0].slot.channel.name()
                )));
            }
        }
        Ok(MeasurementBundle {
            epoch,
            entries,
            doppler_spread,
        })
    }

    pub fn entries(&self) -> &[MeasurementEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn layout(&self) -> Layout {
        self.entries.iter().map(|e| e.slot).collect()
    }

    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.value))
    }

    pub fn get(&self, slot: &Slot) -> Option<&MeasurementEntry> {
        self.entries.iter().find(|e| e.slot == *slot)
    }

    /// Keeps only entries for which `keep` returns true.
    pub fn filtered(&self, keep: impl Fn(&Slot) -> bool) -> MeasurementBundle {
        MeasurementBundle {
            epoch: self.epoch,
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| keep(&e.slot))
                .collect(),
            doppler_spread: self.doppler_spread,
        }
    }

    /// Entries grouped by channel, for diagnostics.
    pub fn by_channel(&self) -> BTreeMap<Channel, Vec<f64>> {
        let mut out: BTreeMap<Channel, Vec<f64>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.slot.channel).or_default().push(e.value);
        }
        out
    }
}

/// States reaching the model come from a filter, so non-finite components
/// mean the filter itself has blown up.
fn filter_state(x: &DVector<f64>) -> Result<StateVector> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "non-finite state reached the measurement model",
        ));
    }
    StateVector::from_slice(x.as_slice())
}

/// Stacked observation model over an explicit layout; the bridge between the
/// geometry above and the generic filters.
pub struct StackedModel<'a> {
    pub anchors: &'a AnchorSet,
    pub layout: &'a [Slot],
}

impl MeasurementFunction for StackedModel<'_> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        predict_layout(&filter_state(x)?, self.anchors, self.layout)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        jacobian_layout(&filter_state(x)?, self.anchors, self.layout)
    }

    fn is_angular(&self, row: usize) -> bool {
        self.layout[row].channel.is_angular()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn origin() -> Anchor {
        Anchor::new(1, [0.0, 0.0, 0.0])
    }

    fn three_anchors() -> AnchorSet {
        AnchorSet::new(vec![
            Anchor::new(3, [60.0, 80.0, 10.0]).with_kind(AnchorKind::Virtual),
            Anchor::new(1, [0.0, 0.0, 10.0]).with_channels(ChannelMask {
                doppler: true,
                ..Default::default()
            }),
            Anchor::new(2, [100.0, -10.0, 8.0]).with_kind(AnchorKind::Virtual),
        ])
        .unwrap()
    }

    #[test]
    fn toa_examples() {
        let a = origin();
        assert_abs_diff_eq!(toa([300.0, 0.0, 0.0], &a).unwrap(), 300.0 / SPEED_OF_LIGHT);
        assert!((toa([300.0, 0.0, 0.0], &a).unwrap() - 1.00069e-6).abs() < 1e-11);
        assert_abs_diff_eq!(toa([3.0, 4.0, 0.0], &a).unwrap(), 5.0 / SPEED_OF_LIGHT);
        assert!(matches!(
            toa([0.0; 3], &a),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn aoa_examples() {
        let a = origin();
        let (az, el) = aoa([1.0, 1.0, 0.0], &a).unwrap();
        assert_abs_diff_eq!(az, FRAC_PI_4, epsilon = 1e-15);
        assert_eq!(el, 0.0);
        assert_abs_diff_eq!(aoa_azimuth([0.0, -2.0, 0.0], &a).unwrap(), -FRAC_PI_2);
        assert_abs_diff_eq!(aoa_elevation([1.0, 0.0, 1.0], &a).unwrap(), FRAC_PI_4);
        assert!(aoa([0.0, 0.0, 5.0], &a).is_err());
    }

    #[test]
    fn aod_examples() {
        let a = origin();
        assert_abs_diff_eq!(
            aod([1.0, 1.0, 0.0], &a).unwrap(),
            -3.0 * FRAC_PI_4,
            epsilon = 1e-15
        );
        assert_eq!(aod([-5.0, 0.0, 0.0], &a).unwrap(), 0.0);
        assert!(aod([0.0, 0.0, 1.0], &a).is_err());
    }

    #[test]
    fn doppler_examples() {
        let a = origin();
        assert_abs_diff_eq!(
            doppler_los([10.0, 0.0, 0.0], [-3.0, 0.0, 0.0], 0.0, &a).unwrap(),
            -3.0
        );
        assert_abs_diff_eq!(
            doppler_los([10.0, 0.0, 0.0], [0.0, 4.0, 1.0], 0.0, &a).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            doppler_los([3.0, 2.0, 1.0], [0.0; 3], 1.5, &a).unwrap(),
            1.5
        );
        assert!(doppler_los([0.0; 3], [1.0, 0.0, 0.0], 0.0, &a).is_err());
    }

    #[test]
    fn odometry_examples() {
        let (s, h) = odometry(&StateVector::new([0.0; 3], [1.0, 1.0, 0.0], 0.0));
        assert_abs_diff_eq!(s, 2f64.sqrt());
        assert_abs_diff_eq!(h, FRAC_PI_4);
        assert_eq!(
            odometry(&StateVector::new([0.0; 3], [0.0; 3], 0.0)),
            (0.0, 0.0)
        );
        let (s, h) = odometry(&StateVector::new([0.0; 3], [0.0, -2.0, 0.0], 0.0));
        assert_eq!(s, 2.0);
        assert_abs_diff_eq!(h, -FRAC_PI_2);
    }

    #[test]
    fn wrap_examples() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn stacking_dimensions() {
        let anchors = three_anchors();
        let x = StateVector::new([20.0, 30.0, 1.5], [1.0, 0.5, 0.0], 0.1);
        let (z, layout) = stack_predicted(&x, &anchors, MobilityMode::HighMobility).unwrap();
        assert_eq!(z.len(), 13);
        assert_eq!(layout[0], Slot::anchor(1, Channel::Toa));
        assert_eq!(layout[4], Slot::anchor(2, Channel::Toa));
        assert_eq!(layout[12], Slot::anchor(1, Channel::Doppler));
        let (z, layout) = stack_predicted(&x, &anchors, MobilityMode::LowMobility).unwrap();
        assert_eq!(z.len(), 15);
        assert_eq!(layout[14], Slot::odometry(Channel::OdoHeading));

        let single = AnchorSet::new(vec![
            origin().with_channels(ChannelMask::only(&[Channel::Toa, Channel::Doppler]))
        ])
        .unwrap();
        let (z, _) = stack_predicted(&x, &single, MobilityMode::HighMobility).unwrap();
        assert_eq!(z.len(), 2);
    }

    #[test]
    fn anchor_set_requires_one_los() {
        assert!(AnchorSet::new(vec![Anchor::new(1, [0.0; 3])]).is_err());
        assert!(AnchorSet::new(vec![]).is_err());
        let dup = vec![
            Anchor::new(1, [0.0; 3]).with_channels(ChannelMask::only(&[Channel::Doppler])),
            Anchor::new(1, [1.0; 3]),
        ];
        assert!(AnchorSet::new(dup).is_err());
    }

    #[test]
    fn bias_column_only_in_doppler_row() {
        let anchors = three_anchors();
        let x = StateVector::new([20.0, 30.0, 1.5], [1.0, 0.5, 0.0], 0.1);
        let (_, layout) = stack_predicted(&x, &anchors, MobilityMode::LowMobility).unwrap();
        let h = jacobian(&x, &anchors, MobilityMode::LowMobility).unwrap();
        for (i, slot) in layout.iter().enumerate() {
            let expected = if slot.channel == Channel::Doppler {
                1.0
            } else {
                0.0
            };
            assert_eq!(h[(i, idx::BIAS)], expected);
        }
    }

    #[test]
    fn doppler_row_position_columns_vanish_at_rest() {
        let anchors = three_anchors();
        let x = StateVector::new([20.0, 30.0, 1.5], [0.0; 3], 0.3);
        let h = jacobian(&x, &anchors, MobilityMode::HighMobility).unwrap();
        for j in 0..3 {
            assert_eq!(h[(12, j)], 0.0);
        }
    }

    #[test]
    fn toa_row_matches_finite_differences() {
        let anchors = three_anchors();
        let x = StateVector::new([20.0, 30.0, 1.5], [1.0, 0.5, 0.0], 0.1);
        let layout = [Slot::anchor(2, Channel::Toa)];
        let h = jacobian_layout(&x, &anchors, &layout).unwrap();
        let step = 1e-4;
        for j in 0..STATE_DIM {
            let mut plus = x;
            let mut minus = x;
            plus.0[j] += step;
            minus.0[j] -= step;
            let fd = (predict_layout(&plus, &anchors, &layout).unwrap()[0]
                - predict_layout(&minus, &anchors, &layout).unwrap()[0])
                / (2.0 * step);
            assert!((fd - h[(0, j)]).abs() < 1e-8);
        }
    }

    #[test]
    fn assemble_r_examples() {
        let profile = NoiseProfile {
            sigma_toa: 1e-9,
            ..Default::default()
        };
        let r = assemble_r(
            &profile,
            &[Slot::anchor(1, Channel::Toa), Slot::anchor(2, Channel::Toa)],
        );
        assert_abs_diff_eq!(r[(0, 0)], 1e-18, epsilon = 1e-30);
        assert_abs_diff_eq!(r[(1, 1)], 1e-18, epsilon = 1e-30);
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(assemble_r(&profile, &[]).nrows(), 0);

        let layout = canonical_layout(&three_anchors(), MobilityMode::LowMobility);
        let r = assemble_r(&profile, &layout);
        for (i, s) in layout.iter().enumerate() {
            assert_eq!(r[(i, i)], profile.sigma(s.channel).powi(2));
        }
    }

    #[test]
    fn bundle_sorts_into_canonical_order() {
        let e = |slot, value| MeasurementEntry {
            slot,
            value,
            variance: 1.0,
        };
        let b = MeasurementBundle::new(
            0,
            vec![
                e(Slot::odometry(Channel::OdoSpeed), 1.0),
                e(Slot::anchor(1, Channel::Doppler), 2.0),
                e(Slot::anchor(2, Channel::Toa), 3.0),
                e(Slot::anchor(1, Channel::Aod), 4.0),
                e(Slot::anchor(1, Channel::Toa), 5.0),
            ],
            0.0,
        )
        .unwrap();
        assert_eq!(b.values().as_slice(), &[5.0, 4.0, 3.0, 2.0, 1.0]);
        let bad = MeasurementBundle::new(
            0,
            vec![MeasurementEntry {
                slot: Slot::anchor(1, Channel::Toa),
                value: 1.0,
                variance: 0.0,
            }],
            0.0,
        );
        assert!(bad.is_err());
    }

    fn non_degenerate() -> impl Strategy<Value = ([f64; 3], [f64; 3])> {
        (
            prop::array::uniform3(-200.0f64..200.0),
            prop::array::uniform3(-200.0f64..200.0),
        )
            .prop_filter("horizontal separation", |(p, a)| {
                (p[0] - a[0]).hypot(p[1] - a[1]) > 1.0
            })
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_periodic(t in -100.0f64..100.0, k in -5i32..5) {
            let w = wrap_angle(t);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w), w);
            let shifted = wrap_angle(t + 2.0 * PI * k as f64);
            prop_assert!(wrap_angle(shifted - w).abs() < 1e-9);
        }

        #[test]
        fn azimuth_is_aod_plus_pi((p, a) in non_degenerate()) {
            let anchor = Anchor::new(1, a);
            let az = aoa_azimuth(p, &anchor).unwrap();
            let d = aod(p, &anchor).unwrap();
            prop_assert!(wrap_angle(az - wrap_angle(d + PI)).abs() < 1e-12);
        }

        #[test]
        fn toa_translation_invariant((p, a) in non_degenerate(), t in prop::array::uniform3(-1e3f64..1e3)) {
            let moved_p = [p[0] + t[0], p[1] + t[1], p[2] + t[2]];
            let moved_a = [a[0] + t[0], a[1] + t[1], a[2] + t[2]];
            let x = toa(p, &Anchor::new(1, a)).unwrap();
            let y = toa(moved_p, &Anchor::new(1, moved_a)).unwrap();
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1e-9));
        }

        #[test]
        fn doppler_flips_with_velocity((p, a) in non_degenerate(), v in prop::array::uniform3(-20.0f64..20.0)) {
            let anchor = Anchor::new(1, a);
            let fwd = doppler_los(p, v, 0.0, &anchor).unwrap();
            let back = doppler_los(p, [-v[0], -v[1], -v[2]], 0.0, &anchor).unwrap();
            prop_assert!((fwd + back).abs() < 1e-12);
        }
    }
}
