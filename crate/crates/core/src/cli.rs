//! Command implementations behind the `hybridloc` binary: simulate a
//! scenario, run a pipeline over it, and compare filters across seeds.
//!
//! Every artifact except `manifest.json` depends only on (config, seed,
//! version), so repeated invocations write identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::evaluation::MetricReport;
use crate::measurement::{AnchorSet, MeasurementBundle};
use crate::pipeline::{
    finish, initial_estimate, EpochLog, FilterChoice, PipelineConfig, RunReport, Track,
};
use crate::scenario::{load_csv, save_csv, GroundTruth};
use crate::state::StateEstimate;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record of one invocation and the files it wrote.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub runtime_s: f64,
}

impl RunManifest {
    fn new(command: &str, config: Option<&Path>, seed: u64, out: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            input: None,
            seed,
            out_dir: out.to_path_buf(),
            artifacts: Vec::new(),
            version: VERSION.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            runtime_s: 0.0,
        }
    }

    fn write(&mut self, out: &Path, started: Instant) -> Result<PathBuf> {
        self.runtime_s = started.elapsed().as_secs_f64();
        let path = out.join("manifest.json");
        self.artifacts.push(path.clone());
        write_json(&path, self)?;
        Ok(path)
    }
}

fn write_resolved(
    out: &Path,
    cfg: &ScenarioConfig,
    seed: u64,
    manifest: &mut RunManifest,
) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let path = out.join("config.toml");
    fs::write(&path, cfg.to_toml_string()?)?;
    manifest.artifacts.push(path);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Loads a scenario from a TOML path, or a preset when `path` is
/// `preset:<name>`. No path means the pedestrian preset.
pub fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        None => Ok(ScenarioConfig::pedestrian()),
        Some(p) => match p.to_str().and_then(|s| s.strip_prefix("preset:")) {
            Some(name) => ScenarioConfig::preset(name),
            None => ScenarioConfig::load(p),
        },
    }
}

/// Common options for `simulate` and `run`.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub flat: bool,
}

impl Options {
    fn scenario(&self) -> Result<(ScenarioConfig, u64)> {
        let mut cfg = load_scenario(self.config.as_deref())?;
        if self.flat {
            cfg.flat = true;
            cfg.validate()?;
        }
        let seed = self.seed.unwrap_or(cfg.seed);
        Ok((cfg, seed))
    }
}

/// Writes `scenario.csv` (truth plus measurements) and a manifest.
pub fn cmd_simulate(opts: &Options) -> Result<RunManifest> {
    let started = Instant::now();
    let (cfg, seed) = opts.scenario()?;
    fs::create_dir_all(&opts.out)?;
    let (truth, stream) = cfg.simulate(seed)?;
    let mut manifest = RunManifest::new("simulate", opts.config.as_deref(), seed, &opts.out);
    write_resolved(&opts.out, &cfg, seed, &mut manifest)?;
    let csv_path = opts.out.join("scenario.csv");
    save_csv(&csv_path, &truth, &stream, &cfg.anchor_set()?)?;
    manifest.artifacts.push(csv_path);
    manifest.write(&opts.out, started)?;
    Ok(manifest)
}

/// Layer switches given on the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct LayerFlags {
    pub no_gating: bool,
    pub no_adapt: bool,
    pub no_smooth: bool,
}

impl LayerFlags {
    pub fn apply(self, cfg: &mut PipelineConfig) {
        if self.no_gating {
            cfg.gating_enabled = false;
        }
        if self.no_adapt {
            cfg.adaptation_enabled = false;
        }
        if self.no_smooth {
            cfg.smoothing_enabled = false;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricSummary {
    pub ate: f64,
    pub rpe: f64,
    pub nees: f64,
    pub rmse: f64,
}

impl From<&MetricReport> for MetricSummary {
    fn from(m: &MetricReport) -> Self {
        MetricSummary {
            ate: m.ate,
            rpe: m.rpe,
            nees: m.nees_mean,
            rmse: m.rmse,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Layers {
    pub gating: bool,
    pub adaptation: bool,
    pub smoothing: bool,
    pub flat: bool,
}

/// Stable schema of `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub version: String,
    pub seed: u64,
    pub filter: String,
    pub layers: Layers,
    pub epochs: usize,
    pub metrics: MetricSummary,
    pub filtered_metrics: MetricSummary,
    pub mode_histogram: std::collections::BTreeMap<String, usize>,
    pub mode_transitions: usize,
    pub gate_rejection_rate: f64,
    pub out_of_range_epochs: usize,
    pub failed_epochs: usize,
}

impl ReportDocument {
    pub fn new(report: &RunReport, cfg: &PipelineConfig, seed: u64) -> Self {
        ReportDocument {
            version: VERSION.to_string(),
            seed,
            filter: report.filter.name().to_string(),
            layers: Layers {
                gating: cfg.gating_enabled,
                adaptation: cfg.adaptation_enabled,
                smoothing: cfg.smoothing_enabled,
                flat: cfg.flat,
            },
            epochs: report.logs.len(),
            metrics: report.metrics().into(),
            filtered_metrics: (&report.filtered_metrics).into(),
            mode_histogram: report
                .mode_histogram
                .iter()
                .map(|(m, n)| (m.name().to_string(), *n))
                .collect(),
            mode_transitions: report.mode_transitions,
            gate_rejection_rate: report.gate_rejection_rate,
            out_of_range_epochs: report.logs.iter().filter(|l| l.out_of_range).count(),
            failed_epochs: report.failures,
        }
    }
}

/// Per-epoch log as CSV.
pub fn write_epoch_log<W: Write>(writer: W, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record([
        "epoch",
        "mode",
        "filter",
        "gate",
        "nis",
        "dof",
        "gamma",
        "rejected_channels",
        "switched",
        "out_of_range",
        "x",
        "y",
        "z",
        "vx",
        "vy",
        "vz",
        "b",
        "failure",
    ])
    .map_err(map)?;
    for l in logs {
        let mut row = vec![
            l.epoch.to_string(),
            l.mode.name().to_string(),
            l.filter.name().to_string(),
            format!("{:?}", l.gate).to_lowercase(),
            l.nis.to_string(),
            l.dof.to_string(),
            l.gamma.to_string(),
            l.rejected_channels.to_string(),
            l.switched.to_string(),
            l.out_of_range.to_string(),
        ];
        row.extend(l.posterior.mean.iter().map(|v| v.to_string()));
        row.push(l.failure.clone().unwrap_or_default());
        w.write_record(&row).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

/// Estimated trajectory (filtered and final) next to the truth.
pub fn write_trajectory<W: Write>(
    writer: W,
    truth: &GroundTruth,
    filtered: &[StateEstimate],
    smoothed: &[StateEstimate],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record([
        "epoch", "true_x", "true_y", "true_z", "filt_x", "filt_y", "filt_z", "est_x", "est_y",
        "est_z",
    ])
    .map_err(map)?;
    for (k, (f, s)) in filtered.iter().zip(smoothed).enumerate() {
        let t = truth.states[k].position();
        let mut row = vec![k.to_string()];
        row.extend(t.iter().map(|v| v.to_string()));
        row.extend((0..3).map(|i| f.mean[i].to_string()));
        row.extend((0..3).map(|i| s.mean[i].to_string()));
        w.write_record(&row).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the forward pass step by step; on an unrecoverable error the logs
/// gathered so far are returned with it.
pub fn run_logged(
    cfg: &PipelineConfig,
    anchors: &AnchorSet,
    truth: &GroundTruth,
    stream: &[MeasurementBundle],
) -> std::result::Result<RunReport, (Error, Vec<EpochLog>)> {
    let fail = |e| (e, Vec::new());
    if stream.is_empty() {
        return Err(fail(Error::EmptyStream));
    }
    if truth.len() != stream.len() {
        return Err(fail(Error::invalid("truth and stream lengths differ")));
    }
    let initial = initial_estimate(&truth.states[0], cfg).map_err(fail)?;
    let mut track = Track::new(cfg.clone(), anchors.clone(), truth.dt, initial).map_err(fail)?;
    for b in stream {
        if let Err(e) = track.step(b) {
            return Err((e, track.into_logs()));
        }
    }
    let logs = track.into_logs();
    finish(cfg, truth, logs.clone()).map_err(|e| (e, logs))
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub common: Options,
    /// Measurement CSV to use instead of simulating.
    pub input: Option<PathBuf>,
    pub filter: Option<FilterChoice>,
    pub layers: LayerFlags,
}

/// Runs one pipeline and writes `report.json`, `epochs.csv`,
/// `trajectory.csv` and `manifest.json`.
pub fn cmd_run(opts: &RunOptions) -> Result<(RunManifest, ReportDocument)> {
    let started = Instant::now();
    let (scenario, seed) = opts.common.scenario()?;
    let mut cfg = scenario.pipeline_config();
    if let Some(f) = opts.filter {
        cfg.filter = f;
    }
    opts.layers.apply(&mut cfg);
    cfg.validate()?;
    let anchors = scenario.anchor_set()?;
    let (truth, stream) = match &opts.input {
        Some(path) => load_csv(path, &anchors, &scenario.noise, scenario.trajectory.dt)?,
        None => scenario.simulate(seed)?,
    };

    let out = &opts.common.out;
    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("run", opts.common.config.as_deref(), seed, out);
    manifest.input = opts.input.clone();
    write_resolved(out, &scenario, seed, &mut manifest)?;
    let log_path = out.join("epochs.csv");

    let report = match run_logged(&cfg, &anchors, &truth, &stream) {
        Ok(r) => r,
        Err((e, partial)) => {
            write_epoch_log(fs::File::create(&log_path)?, &partial)?;
            manifest.artifacts.push(log_path);
            manifest.write(out, started)?;
            return Err(e);
        }
    };
    write_epoch_log(fs::File::create(&log_path)?, &report.logs)?;
    manifest.artifacts.push(log_path);
    let traj_path = out.join("trajectory.csv");
    write_trajectory(
        fs::File::create(&traj_path)?,
        &truth,
        &report.filtered,
        &report.smoothed,
    )?;
    manifest.artifacts.push(traj_path);
    let doc = ReportDocument::new(&report, &cfg, seed);
    let report_path = out.join("report.json");
    write_json(&report_path, &doc)?;
    manifest.artifacts.push(report_path);
    manifest.write(out, started)?;
    Ok((manifest, doc))
}

/// Rows of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Ekf,
    Ukf,
    Ckf,
    OptimizedEkf,
    OptimizedUkf,
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ekf,
        Variant::Ukf,
        Variant::Ckf,
        Variant::OptimizedEkf,
        Variant::OptimizedUkf,
        Variant::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ekf => "ekf",
            Variant::Ukf => "ukf",
            Variant::Ckf => "ckf",
            Variant::OptimizedEkf => "optimized-ekf",
            Variant::OptimizedUkf => "optimized-ukf",
            Variant::Hybrid => "hybrid",
        }
    }

    /// Plain variants run with every layer off; optimized ones and the hybrid
    /// run with gating, adaptation and smoothing on.
    pub fn configure(self, base: &PipelineConfig) -> PipelineConfig {
        let (filter, optimized) = match self {
            Variant::Ekf => (FilterChoice::Ekf, false),
            Variant::Ukf => (FilterChoice::Ukf, false),
            Variant::Ckf => (FilterChoice::Ckf, false),
            Variant::OptimizedEkf => (FilterChoice::Ekf, true),
            Variant::OptimizedUkf => (FilterChoice::Ukf, true),
            Variant::Hybrid => (FilterChoice::Hybrid, true),
        };
        let mut cfg = base.clone();
        cfg.filter = filter;
        cfg.gating_enabled = optimized;
        cfg.adaptation_enabled = optimized;
        cfg.smoothing_enabled = optimized;
        cfg
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub variant: &'static str,
    pub seeds: usize,
    pub ate: f64,
    pub rpe: f64,
    pub nees: f64,
    pub rmse: f64,
}

/// Runs every (variant, seed) pair on the scenario and averages per variant.
/// Runs execute in parallel; results are gathered in (variant, seed) order.
pub fn compare(
    scenario: &ScenarioConfig,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Vec<CompareRow>> {
    if seeds.is_empty() {
        return Err(Error::invalid("compare needs at least one seed"));
    }
    if variants.is_empty() {
        return Err(Error::invalid("compare needs at least one variant"));
    }
    let anchors = scenario.anchor_set()?;
    let base = scenario.pipeline_config();
    let data: Vec<(GroundTruth, Vec<MeasurementBundle>)> = seeds
        .par_iter()
        .map(|&s| scenario.simulate(s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| (0..seeds.len()).map(move |i| (v, i)))
        .collect();
    let results: Vec<MetricSummary> = jobs
        .par_iter()
        .map(|&(v, i)| {
            let (truth, stream) = &data[i];
            let r = crate::pipeline::run(&v.configure(&base), &anchors, truth, stream)?;
            Ok(r.metrics().into())
        })
        .collect::<Result<_>>()?;
    let n = seeds.len();
    Ok(variants
        .iter()
        .zip(results.chunks(n))
        .map(|(v, chunk)| {
            let avg = |f: fn(&MetricSummary) -> f64| chunk.iter().map(f).sum::<f64>() / n as f64;
            CompareRow {
                variant: v.name(),
                seeds: n,
                ate: avg(|m| m.ate),
                rpe: avg(|m| m.rpe),
                nees: avg(|m| m.nees),
                rmse: avg(|m| m.rmse),
            }
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub common: Options,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

/// Writes `compare.csv` with one row per variant.
pub fn cmd_compare(opts: &CompareOptions) -> Result<(RunManifest, Vec<CompareRow>)> {
    let started = Instant::now();
    let (scenario, seed) = opts.common.scenario()?;
    let rows = compare(&scenario, &opts.variants, &opts.seeds)?;
    fs::create_dir_all(&opts.common.out)?;
    let path = opts.common.out.join("compare.csv");
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    for r in &rows {
        w.serialize(r)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    w.flush()?;
    let mut manifest = RunManifest::new(
        "compare",
        opts.common.config.as_deref(),
        seed,
        &opts.common.out,
    );
    manifest.artifacts.push(path);
    manifest.write(&opts.common.out, started)?;
    Ok((manifest, rows))
}

/// Parses `3`, `0..10` (half-open) or `1,4,9`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::invalid(format!("cannot parse seeds `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}
