//! Build a small network in code: a junction with two routes, timed
//! guidance and a pulsed stop line, then simulate guidance followers.
//!
//! cargo run --release --example custom_network

use std::sync::Arc;

use crowdroute::engine::{run, Departure, Mode, Policy, Scenario};
use crowdroute::eval::route_counts;
use crowdroute::network::{AlternativeDraft, ControlMode, Interval, NetworkBuilder};
use crowdroute::walking::WalkParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stops = (0..20)
        .map(|i| (Interval::new(i as f64 * 90.0, i as f64 * 90.0 + 30.0), ControlMode::Stop))
        .collect();
    let network = NetworkBuilder::new()
        .node("gate", None)
        .node("fork", None)
        .node("bend", None)
        .node("exit", None)
        .link("approach", "gate", "fork", 20.0, 3.0)
        .link("main", "fork", "exit", 60.0, 2.0)
        .link("side_a", "fork", "bend", 50.0, 1.5)
        .link("side_b", "bend", "exit", 40.0, 1.5)
        .origin("gate")
        .destination("exit")
        .junction("fork", "fork", vec![AlternativeDraft::new("main", "main"), AlternativeDraft::new("side", "side_a")])
        .guidance("fork", Interval::new(300.0, 900.0), 1)
        .control_point_on_link("signal", "main", 30.0, stops)
        .build()?;
    let origin = network.origins()[0];
    let sc = Scenario {
        name: "custom".into(),
        network: Arc::new(network),
        mode: Mode::Firework,
        policy: Policy::Follow,
        departures: (0..600).map(|i| Departure { time: i as f64 * 2.0, origin }).collect(),
        scripted: Vec::new(),
        replications: 1,
        base_seed: 1,
        walk: WalkParams::default(),
        distance_unit_m: 1.0,
        sensing_radius_m: 5.0,
        time_cap_s: None,
        config_hash: "custom".into(),
    };
    let out = run(&sc, 1)?;
    println!("{:?}", out.stats);
    println!("main / side: {:?}", route_counts(&out.log, "fork", 2, false));
    Ok(())
}
