//! Route shares in the evacuation scenario under logit choice and under
//! shortest-path routing.
//!
//! cargo run --release --example evacuation_routes

use crowdroute::engine::{replicate_map, Policy, RunOptions};
use crowdroute::eval::{route_counts, MeanSd};
use crowdroute::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dcm = scenarios::evacuation();
    let sp = scenarios::with_policy(dcm.clone(), Policy::ShortestPath);
    let junction = &dcm.network.junctions()[0];
    for sc in [&dcm, &sp] {
        let counts = replicate_map(sc, 4, &RunOptions::default(), |_, out| {
            route_counts(&out.log, &junction.id, junction.alternatives.len(), false)
        })?;
        print!("{:>4}:", sc.policy.name().to_string());
        for (j, alt) in junction.alternatives.iter().enumerate() {
            let s = MeanSd::of(&counts.iter().map(|c| c[j] as f64).collect::<Vec<_>>());
            print!("  {} {:.2} ± {:.2}", alt.name, s.mean, s.sd);
        }
        println!("  ({} replications)", counts.len());
    }
    Ok(())
}
