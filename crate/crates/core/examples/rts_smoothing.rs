//! Forward filter versus windowed RTS smoothing, with the per-epoch error of
//! both along the first stretch of the track.

use hybridloc::pipeline;
use hybridloc::ScenarioConfig;

fn main() -> hybridloc::Result<()> {
    let scenario = ScenarioConfig::vehicular();
    let (truth, stream) = scenario.simulate(3)?;
    let mut cfg = scenario.pipeline_config();
    cfg.smoother_window = 50;
    let report = pipeline::run(&cfg, &scenario.anchor_set()?, &truth, &stream)?;
    let smoothed = report.smoothed_metrics.as_ref().expect("smoothing is on");

    println!("window {} epochs", cfg.smoother_window);
    println!(
        "filtered ATE {:.3} m, smoothed ATE {:.3} m",
        report.filtered_metrics.ate, smoothed.ate
    );
    println!("\nepoch  filtered  smoothed  sd(x) filt  sd(x) smooth");
    for k in (0..60).step_by(5) {
        println!(
            "{k:>5} {:>9.3} {:>9.3} {:>11.3} {:>13.3}",
            report.filtered_metrics.position_errors[k],
            smoothed.position_errors[k],
            report.filtered[k].cov[(0, 0)].sqrt(),
            report.smoothed[k].cov[(0, 0)].sqrt()
        );
    }
    Ok(())
}
