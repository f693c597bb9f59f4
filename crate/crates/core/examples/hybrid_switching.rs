//! Accelerating from rest to 10 m/s: the classifier hands the track from the
//! EKF to the UKF once, with hysteresis around the 2 m/s threshold.

use hybridloc::pipeline;
use hybridloc::ScenarioConfig;

fn main() -> hybridloc::Result<()> {
    let scenario = ScenarioConfig::accelerating();
    let (truth, stream) = scenario.simulate(scenario.seed)?;
    let cfg = scenario.pipeline_config();
    let report = pipeline::run(&cfg, &scenario.anchor_set()?, &truth, &stream)?;

    println!(
        "thresholds: v_lm {} m/s, v_hm {} m/s, hysteresis {} m/s",
        cfg.v_lm, cfg.v_hm, cfg.hysteresis
    );
    println!("epoch  true speed  est speed  mode            filter");
    for (log, state) in report.logs.iter().zip(&truth.states).take(40) {
        let v = state.velocity();
        let marker = if log.switched { "  <- switch" } else { "" };
        println!(
            "{:>5} {:>11.2} {:>10.2}  {:<15} {}{marker}",
            log.epoch,
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt(),
            log.predicted.speed(),
            log.mode.name(),
            log.filter.name()
        );
    }
    println!(
        "transitions: {}, modes: {:?}",
        report.mode_transitions, report.mode_histogram
    );
    Ok(())
}
