#![allow(dead_code)]

use std::sync::Arc;

use crowdroute::dcm::{ChoiceModel, ParameterVector, UtilitySpec};
use crowdroute::engine::{Departure, Mode, Policy, Scenario};
use crowdroute::network::{AlternativeDraft, Network, NetworkBuilder};
use crowdroute::walking::WalkParams;

pub fn scenario(network: Network, mode: Mode, policy: Policy, departures: &[f64]) -> Scenario {
    let origin = network.origins()[0];
    Scenario {
        name: "test".into(),
        network: Arc::new(network),
        mode,
        policy,
        departures: departures.iter().map(|&time| Departure { time, origin }).collect(),
        scripted: Vec::new(),
        replications: 1,
        base_seed: 1,
        walk: WalkParams::default(),
        distance_unit_m: 1.0,
        sensing_radius_m: 5.0,
        time_cap_s: None,
        config_hash: "test".into(),
    }
}

/// Entry link into a junction offering a 50 m and an 80 m route to `d`.
pub fn two_routes() -> NetworkBuilder {
    NetworkBuilder::new()
        .node("o", None)
        .node("j", None)
        .node("m", None)
        .node("d", None)
        .link("entry", "o", "j", 10.0, 2.0)
        .link("short", "j", "d", 50.0, 2.0)
        .link("long_a", "j", "m", 40.0, 2.0)
        .link("long_b", "m", "d", 40.0, 2.0)
        .origin("o")
        .destination("d")
        .junction(
            "J",
            "j",
            vec![AlternativeDraft::new("short", "short"), AlternativeDraft::new("long", "long_a")],
        )
}

pub fn corridor(length: f64, width: f64) -> NetworkBuilder {
    NetworkBuilder::new()
        .node("o", None)
        .node("d", None)
        .link("hall", "o", "d", length, width)
        .origin("o")
        .destination("d")
}

pub fn firework_model(betas: [f64; 3], asc: f64) -> ChoiceModel {
    ChoiceModel::new(
        UtilitySpec::firework(),
        ParameterVector {
            betas: betas.to_vec(),
            ascs: vec![0.0, asc],
        },
    )
    .unwrap()
}

/// Arrival time of one unobstructed walker over `distance`, stepping
/// v ← clamp(v + dt (v₀ − v)/τ), x ← x + v dt from rest.
pub fn euler_arrival(distance: f64, params: &WalkParams, dt: f64) -> f64 {
    let (mut x, mut v, mut steps) = (0.0f64, 0.0f64, 0u32);
    while x < distance {
        v = (v + dt * (params.desired_speed - v) / params.relaxation_time).clamp(0.0, params.max_speed);
        x += v * dt;
        steps += 1;
    }
    steps as f64 * dt
}
