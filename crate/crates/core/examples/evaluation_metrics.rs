//! Trajectory metrics computed directly from position series and from a
//! pipeline run.

use hybridloc::evaluation::{ate, rmse, rpe};
use hybridloc::pipeline;
use hybridloc::ScenarioConfig;

fn main() -> hybridloc::Result<()> {
    let truth = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [2.0, 0.0, 0.0],
        [3.0, 0.0, 0.0],
    ];
    let est = [
        [0.1, 0.0, 0.0],
        [1.0, 0.2, 0.0],
        [2.3, 0.0, 0.0],
        [3.0, -0.1, 0.0],
    ];
    println!(
        "toy series: ATE {:.3}, RMSE {:.3}, RPE(1) {:.3}",
        ate(&est, &truth)?,
        rmse(&est, &truth)?,
        rpe(&est, &truth, 1)?
    );

    let scenario = ScenarioConfig::pedestrian();
    let (gt, stream) = scenario.simulate(1)?;
    let report = pipeline::run(
        &scenario.pipeline_config(),
        &scenario.anchor_set()?,
        &gt,
        &stream,
    )?;
    for (name, m) in [
        ("filtered", &report.filtered_metrics),
        ("smoothed", report.metrics()),
    ] {
        println!(
            "{name}: ATE {:.3} m, RPE {:.3} m, RMSE {:.3} m, mean NEES {:.2} over 7 states",
            m.ate, m.rpe, m.rmse, m.nees_mean
        );
    }
    Ok(())
}
