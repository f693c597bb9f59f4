//! Simulates a scenario, writes it in the CSV schema, reads it back and runs
//! the pipeline on the loaded copy.

use hybridloc::pipeline;
use hybridloc::scenario::{read_csv, write_csv};
use hybridloc::ScenarioConfig;

fn main() -> hybridloc::Result<()> {
    let mut scenario = ScenarioConfig::pedestrian();
    scenario.trajectory.duration = 50;
    let anchors = scenario.anchor_set()?;
    let (truth, stream) = scenario.simulate(21)?;

    let mut buf = Vec::new();
    write_csv(&mut buf, &truth, &stream, &anchors)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    let mut lines = text.lines();
    println!("header: {}", lines.next().unwrap_or_default());
    println!("row 0:  {}", lines.next().unwrap_or_default());

    let (truth2, stream2) = read_csv(
        text.as_bytes(),
        &anchors,
        &scenario.noise,
        scenario.trajectory.dt,
    )?;
    assert_eq!(stream, stream2);
    let report = pipeline::run(&scenario.pipeline_config(), &anchors, &truth2, &stream2)?;
    println!(
        "{} epochs round-tripped exactly; ATE {:.3} m",
        stream2.len(),
        report.metrics().ate
    );
    Ok(())
}
