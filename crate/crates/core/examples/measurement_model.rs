//! Evaluates every channel of the observation model for one state and prints
//! the stacked Jacobian.

use hybridloc::measurement::{self, canonical_layout, jacobian_layout, predict_layout};
use hybridloc::{MobilityMode, ScenarioConfig, StateVector};

fn main() -> hybridloc::Result<()> {
    let anchors = ScenarioConfig::pedestrian().anchor_set()?;
    let x = StateVector::new([20.0, 15.0, 1.5], [1.2, 0.4, 0.0], 0.2);

    for a in anchors.iter() {
        let (az, el) = measurement::aoa(x.position(), a)?;
        println!(
            "anchor {}: ToA {:.3} ns, AoA az {:.4} el {:.4} rad, AoD {:.4} rad",
            a.id,
            measurement::toa(x.position(), a)? * 1e9,
            az,
            el,
            measurement::aod(x.position(), a)?
        );
    }
    let los = anchors.los();
    println!(
        "Doppler on LoS anchor {}: {:.4} m/s",
        los.id,
        measurement::doppler_los(x.position(), x.velocity(), x.bias(), los)?
    );

    let layout = canonical_layout(&anchors, MobilityMode::LowMobility);
    let z = predict_layout(&x, &anchors, &layout)?;
    let h = jacobian_layout(&x, &anchors, &layout)?;
    println!(
        "\n{:<18} {:>10}   d/d [x, y, z, vx, vy, vz, b]",
        "slot", "value"
    );
    for (i, slot) in layout.iter().enumerate() {
        let row: Vec<String> = h.row(i).iter().map(|v| format!("{v:10.3e}")).collect();
        let who = slot.anchor.map_or("ue".to_string(), |id| format!("a{id}"));
        println!(
            "{:<18} {:>10.3e}   {}",
            format!("{who}/{}", slot.channel.name()),
            z[i],
            row.join(" ")
        );
    }
    Ok(())
}
