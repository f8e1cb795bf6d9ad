//! Turn raw trajectories into repeated route-choice observations, and a
//! junction choice log into one-shot observations.
//!
//! cargo run --example trajectory_features

use crowdroute::features::{evacuation_observations, firework_observations, ChoiceLogRow, EvacExtraction, TrajectorySample};
use crowdroute::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two route entrances; one walker heads for each
    let route_starts = [[10.0, 0.0], [0.0, 10.0]];
    let mut samples = Vec::new();
    for t in 0..=8 {
        let t = t as f64 * 0.5;
        samples.push(TrajectorySample { id: 1, t_s: t, x_m: 1.2 * t, y_m: 0.1 * t });
        samples.push(TrajectorySample { id: 2, t_s: t, x_m: 0.5, y_m: 1.1 * t });
    }
    let built = evacuation_observations(&samples, &route_starts, &EvacExtraction::default());
    println!("{} observations, {} windows skipped", built.observations.len(), built.skipped_windows);
    for o in built.observations.iter().take(4) {
        println!("  {} t {:.1} chose {} features {:?}", o.individual_id, o.time, o.chosen, o.features.as_slice());
    }

    let sc = scenarios::firework();
    let network = &sc.network;
    let junction = network.junctions()[0].id.clone();
    let rows: Vec<ChoiceLogRow> = [(0.0, 0), (1800.0, 1), (5400.0, 0)]
        .into_iter()
        .enumerate()
        .map(|(i, (t_s, chosen))| ChoiceLogRow { id: format!("v{i}"), t_s, junction_id: junction.clone(), chosen })
        .collect();
    for o in firework_observations(&rows, network, sc.distance_unit_m)? {
        println!("  {} at {:.0} s chose {}: {:?}", o.individual_id, o.time, o.chosen, o.features.as_slice());
    }
    Ok(())
}
