//! Runs EKF, UKF, CKF and the hybrid on the pedestrian and vehicular presets
//! over a handful of seeds.

use hybridloc::cli::{compare, Variant};
use hybridloc::ScenarioConfig;

fn main() -> hybridloc::Result<()> {
    let seeds: Vec<u64> = (0..10).collect();
    for (name, scenario) in [
        ("pedestrian", ScenarioConfig::pedestrian()),
        ("vehicular", ScenarioConfig::vehicular()),
    ] {
        println!("{name} ({} seeds)", seeds.len());
        println!(
            "  {:<14} {:>8} {:>8} {:>8} {:>8}",
            "variant", "ATE", "RPE", "NEES", "RMSE"
        );
        for row in compare(&scenario, &Variant::ALL, &seeds)? {
            println!(
                "  {:<14} {:>8.3} {:>8.3} {:>8.2} {:>8.3}",
                row.variant, row.ate, row.rpe, row.nees, row.rmse
            );
        }
    }
    Ok(())
}
