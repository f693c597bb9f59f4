//! Chi-square gating against injected 10-sigma outliers: the same pipeline
//! with and without the gate.

use hybridloc::pipeline;
use hybridloc::robustness::chi2_quantile;
use hybridloc::ScenarioConfig;

fn main() -> hybridloc::Result<()> {
    for dof in [2, 8, 14] {
        println!(
            "99% gate on {dof} dof: NIS <= {:.2}",
            chi2_quantile(dof, 0.99)?
        );
    }

    let mut scenario = ScenarioConfig::pedestrian();
    scenario.outliers.rate = 0.05;
    let anchors = scenario.anchor_set()?;
    let gated = scenario.pipeline_config();
    let mut ungated = gated.clone();
    ungated.gating_enabled = false;

    println!(
        "\n{:>4} {:>10} {:>10} {:>10} {:>9}",
        "seed", "gated", "ungated", "rejected", "excluded"
    );
    for seed in 0..8 {
        let (truth, stream) = scenario.simulate(seed)?;
        let g = pipeline::run(&gated, &anchors, &truth, &stream)?;
        let u = pipeline::run(&ungated, &anchors, &truth, &stream)?;
        let excluded: usize = g.logs.iter().map(|l| l.rejected_channels).sum();
        println!(
            "{seed:>4} {:>8.3} m {:>8.3} m {:>9.1}% {excluded:>9}",
            g.metrics().ate,
            u.metrics().ate,
            100.0 * g.gate_rejection_rate
        );
    }
    Ok(())
}
