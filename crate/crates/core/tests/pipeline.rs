use hybridloc::filters::{FilterKind, GateDecision, LinearMeasurement, UkfParams};
use hybridloc::measurement::{MeasurementEntry, Slot};
use hybridloc::pipeline::{self, PipelineConfig};
use hybridloc::robustness::{rts_smooth, SmootherEpoch, SmootherInput, GAMMA_MAX, GAMMA_MIN};
use hybridloc::state::{build_transition, propagate, StateEstimate};
use hybridloc::{Channel, MeasurementBundle, ScenarioConfig};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn corrupt(bundle: &MeasurementBundle, slot: Slot, offset: f64) -> MeasurementBundle {
    let entries: Vec<MeasurementEntry> = bundle
        .entries()
        .iter()
        .map(|e| {
            let mut e = *e;
            if e.slot == slot {
                e.value += offset;
            }
            e
        })
        .collect();
    MeasurementBundle::new(bundle.epoch, entries, bundle.doppler_spread).unwrap()
}

fn with_spike(
    scenario: &ScenarioConfig,
    cfg: &PipelineConfig,
    seed: u64,
    at: usize,
) -> pipeline::RunReport {
    let (truth, mut stream) = scenario.simulate(seed).unwrap();
    let slot = Slot::anchor(1, Channel::Toa);
    stream[at] = corrupt(&stream[at], slot, 50.0 * scenario.noise.sigma(Channel::Toa));
    pipeline::run(cfg, &scenario.anchor_set().unwrap(), &truth, &stream).unwrap()
}

#[test]
fn single_gross_outlier_is_excluded_not_the_bundle() {
    let scenario = ScenarioConfig::pedestrian();
    let cfg = scenario.pipeline_config();
    let report = with_spike(&scenario, &cfg, 5, 100);
    let log = &report.logs[100];
    assert_eq!(log.gate, GateDecision::Accept);
    assert_eq!(log.rejected_channels, 1);
    assert_eq!(log.dof + 1, scenario.simulate(5).unwrap().1[100].len());
}

#[test]
fn without_exclusions_the_whole_bundle_is_discarded() {
    let scenario = ScenarioConfig::pedestrian();
    let mut cfg = scenario.pipeline_config();
    cfg.gating.max_exclusions = 0;
    let report = with_spike(&scenario, &cfg, 5, 100);
    let log = &report.logs[100];
    assert_eq!(log.gate, GateDecision::Reject);
    assert_eq!(log.posterior.mean, log.predicted.mean);
    assert_eq!(log.posterior.cov, log.predicted.cov);
}

#[test]
fn one_log_per_epoch_and_gamma_stays_bounded() {
    let mut scenario = ScenarioConfig::pedestrian();
    scenario.outliers.rate = 0.1;
    for seed in 0..5 {
        let (truth, stream) = scenario.simulate(seed).unwrap();
        let report = pipeline::run(
            &scenario.pipeline_config(),
            &scenario.anchor_set().unwrap(),
            &truth,
            &stream,
        )
        .unwrap();
        assert_eq!(report.logs.len(), stream.len());
        for (k, log) in report.logs.iter().enumerate() {
            assert_eq!(log.epoch, stream[k].epoch);
            assert!((GAMMA_MIN..=GAMMA_MAX).contains(&log.gamma));
        }
    }
}

#[test]
fn vehicular_run_never_leaves_high_mobility() {
    let scenario = ScenarioConfig::vehicular();
    let (truth, stream) = scenario.simulate(0).unwrap();
    let report = pipeline::run(
        &scenario.pipeline_config(),
        &scenario.anchor_set().unwrap(),
        &truth,
        &stream,
    )
    .unwrap();
    assert_eq!(report.mode_transitions, 0);
    assert!(report.logs.iter().all(|l| l.filter == FilterKind::Ukf));
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Forward EKF over a 7-state linear system, then a single RTS pass.
fn linear_smoothing_rmse(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = build_transition(1.0).unwrap();
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
        0.01, 0.01, 0.01, 0.05, 0.05, 0.05, 0.01,
    ]));
    let mut h = DMatrix::zeros(3, 7);
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    let r = DMatrix::identity(3, 3) * 0.5;
    let (q_l, r_l) = (
        q.clone().cholesky().unwrap().l(),
        r.clone().cholesky().unwrap().l(),
    );
    let obs = LinearMeasurement { h: h.clone() };
    let mut truth = gaussian(&mut rng, 7);
    let mut est =
        StateEstimate::new(&truth + gaussian(&mut rng, 7), DMatrix::identity(7, 7), 0).unwrap();
    let mut truths = Vec::new();
    let mut epochs: Vec<SmootherEpoch> = Vec::new();
    for k in 0..150 {
        let pred = if k == 0 {
            est.clone()
        } else {
            truth = &model.f * &truth + &q_l * gaussian(&mut rng, 7);
            let mut p = propagate(&est, &model, &q).unwrap();
            p.epoch = k;
            if let Some(prev) = epochs.last_mut() {
                prev.predicted_next = Some(p.clone());
            }
            p
        };
        let z = &h * &truth + &r_l * gaussian(&mut rng, 3);
        est = FilterKind::Ekf
            .update(&pred, &z, &obs, &r, &UkfParams::default(), None)
            .unwrap()
            .posterior;
        truths.push(truth.clone());
        epochs.push(SmootherEpoch {
            filtered: est.clone(),
            predicted_next: None,
            f: model.f.clone(),
            q: q.clone(),
        });
    }
    let filtered: Vec<StateEstimate> = epochs.iter().map(|e| e.filtered.clone()).collect();
    let smoothed = rts_smooth(&SmootherInput { epochs }).unwrap();
    let rmse = |est: &[StateEstimate]| {
        let sum: f64 = est
            .iter()
            .zip(&truths)
            .map(|(e, t)| (e.mean.rows(0, 3) - t.rows(0, 3)).norm_squared())
            .sum();
        (sum / est.len() as f64).sqrt()
    };
    (rmse(&filtered), rmse(&smoothed))
}

#[test]
fn smoothing_lowers_rmse_on_linear_gaussian_runs() {
    let wins = (0..100)
        .map(linear_smoothing_rmse)
        .filter(|(filtered, smoothed)| smoothed <= filtered)
        .count();
    assert!(
        wins >= 95,
        "smoothed RMSE <= filtered in only {wins}/100 runs"
    );
}
