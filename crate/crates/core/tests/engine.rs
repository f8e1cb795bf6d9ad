mod common;

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use crowdroute::engine::{
    audit_log, replicate, run, run_with, AgentState, EventKind, EventLog, Mode, Policy, RunOptions, DT,
};
use crowdroute::eval::route_counts;
use crowdroute::network::{ControlMode, Interval, Train};
use crowdroute::scenarios;
use crowdroute::walking::WalkParams;

use common::*;

fn audited(log: &EventLog, sc: &crowdroute::engine::Scenario) {
    let report = audit_log(log, &sc.network, sc.mode);
    assert!(report.is_clean(), "{:?}", report.violations);
}

fn event_times(log: &EventLog, label: &str) -> Vec<(u32, f64)> {
    log.events
        .iter()
        .filter(|e| e.kind.label() == label)
        .map(|e| (e.agent, e.time()))
        .collect()
}

#[test]
fn shortest_path_walker_matches_euler_oracle() {
    let sc = scenario(two_routes().build().unwrap(), Mode::Firework, Policy::ShortestPath, &[0.0]);
    let out = run_with(&sc, 1, &RunOptions { audit: true }).unwrap();
    assert!(out.stats.audit.as_ref().unwrap().is_clean());
    audited(&out.log, &sc);
    assert_eq!(out.agents[0].route, "entry>short");
    let exit = event_times(&out.log, "EXIT")[0].1;
    let expected = euler_arrival(60.0, &WalkParams::default(), DT);
    assert_abs_diff_eq!(exit, expected, epsilon = 1e-9);
}

#[test]
fn follow_obeys_guidance_for_everyone() {
    let net = two_routes().guidance("J", Interval::new(0.0, 1e6), 1).build().unwrap();
    let departures: Vec<f64> = (0..30).map(|i| i as f64 * 1.5).collect();
    let sc = scenario(net, Mode::Firework, Policy::Follow, &departures);
    let out = run(&sc, 1).unwrap();
    audited(&out.log, &sc);
    assert_eq!(route_counts(&out.log, "J", 2, false), vec![0, 30]);
    assert!(out.agents.iter().all(|a| a.route == "entry>long_a>long_b"));
}

#[test]
fn follow_without_guidance_falls_back_to_shortest() {
    let net = two_routes().guidance("J", Interval::new(1000.0, 2000.0), 1).build().unwrap();
    let sc = scenario(net, Mode::Firework, Policy::Follow, &[0.0, 5.0]);
    let out = run(&sc, 1).unwrap();
    assert_eq!(route_counts(&out.log, "J", 2, false), vec![2, 0]);
}

#[test]
fn stop_line_holds_until_release() {
    // one lane
    let net = corridor(40.0, 0.5)
        .control_point_on_link("cp", "hall", 20.0, vec![(Interval::new(0.0, 60.0), ControlMode::Stop)])
        .build()
        .unwrap();
    let sc = scenario(net, Mode::Firework, Policy::ShortestPath, &[0.0, 2.0, 4.0, 6.0]);
    let out = run_with(&sc, 1, &RunOptions { audit: true }).unwrap();
    assert!(out.stats.audit.as_ref().unwrap().is_clean());
    audited(&out.log, &sc);
    let holds = event_times(&out.log, "HOLD");
    let releases = event_times(&out.log, "RELEASE");
    assert_eq!(holds.len(), 1, "only the front agent reaches the line");
    assert_eq!(releases.len(), 1);
    assert!(releases[0].1 >= 60.0);
    let max = WalkParams::default().max_speed;
    for (_, t) in event_times(&out.log, "EXIT") {
        assert!(t >= 60.0 + 20.0 / max, "exit at {t} before the stop could be cleared");
    }
}

#[test]
fn pulsed_stop_windows_group_the_outflow() {
    // stop for 30 s of every 60 s
    let schedule: Vec<_> = (0..10)
        .map(|i| (Interval::new(i as f64 * 60.0, i as f64 * 60.0 + 30.0), ControlMode::Stop))
        .collect();
    let net = corridor(12.0, 1.0).control_point_on_link("cp", "hall", 10.0, schedule).build().unwrap();
    let departures: Vec<f64> = (0..60).map(|i| i as f64 * 4.0).collect();
    let sc = scenario(net, Mode::Firework, Policy::ShortestPath, &departures);
    let out = run_with(&sc, 1, &RunOptions { audit: true }).unwrap();
    assert!(out.stats.audit.as_ref().unwrap().is_clean());
    audited(&out.log, &sc);
    for (_, t) in event_times(&out.log, "EXIT") {
        let phase = t % 60.0;
        if t < 600.0 {
            // the last 2 m past the line take under 2 s
            assert!(!(2.0..30.0).contains(&phase), "exit at {t} during a stop window");
        }
    }
}

fn station_network(platform: Option<usize>, trains: Vec<Train>) -> crowdroute::network::Network {
    corridor(20.0, 2.0).station("d", platform, trains).build().unwrap()
}

#[test]
fn boarding_is_fifo_and_capacity_bound() {
    let trains: Vec<Train> = (1..=5).map(|i| Train { departure: i as f64 * 60.0, capacity: 4 }).collect();
    let departures: Vec<f64> = (0..18).map(|i| i as f64 * 1.0).collect();
    let sc = scenario(station_network(None, trains), Mode::Firework, Policy::ShortestPath, &departures);
    let out = run(&sc, 1).unwrap();
    audited(&out.log, &sc);
    let arrivals: Vec<u32> = event_times(&out.log, "ARRIVE_STATION").iter().map(|a| a.0).collect();
    let boards: Vec<(u32, u32)> = out
        .log
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Board { train } => Some((e.agent, train)),
            _ => None,
        })
        .collect();
    assert_eq!(boards.len(), 18);
    assert_eq!(boards.iter().map(|b| b.0).collect::<Vec<_>>(), arrivals);
    for t in 0..5 {
        let n = boards.iter().filter(|b| b.1 == t).count();
        assert_eq!(n, if t < 4 { 4 } else { 2 });
    }
    assert!(out.agents.iter().all(|a| a.state == AgentState::Boarded));
}

#[test]
fn full_platform_backs_up_the_approach() {
    // at most three board each train, the platform's capacity
    let trains: Vec<Train> = (1..=4).map(|i| Train { departure: i as f64 * 120.0, capacity: 100 }).collect();
    let departures: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
    let sc = scenario(station_network(Some(3), trains), Mode::Firework, Policy::ShortestPath, &departures);
    let out = run_with(&sc, 1, &RunOptions { audit: true }).unwrap();
    assert!(out.stats.audit.as_ref().unwrap().is_clean());
    audited(&out.log, &sc);
    let before_train = event_times(&out.log, "ARRIVE_STATION").iter().filter(|a| a.1 < 120.0).count();
    assert_eq!(before_train, 3);
    assert_eq!(out.stats.boarded, 10);
}

#[test]
fn unserved_station_truncates_at_the_cap() {
    let mut sc = scenario(station_network(None, Vec::new()), Mode::Firework, Policy::ShortestPath, &[0.0]);
    sc.time_cap_s = Some(100.0);
    let out = run(&sc, 1).unwrap();
    assert!(out.log.is_truncated());
    assert_eq!(out.stats.waiting, 1);
    audited(&out.log, &sc);
}

#[test]
fn outflow_respects_lane_capacity() {
    let width = 2.0;
    let departures = vec![0.0; 200];
    let sc = scenario(corridor(30.0, width).build().unwrap(), Mode::Firework, Policy::ShortestPath, &departures);
    let out = run_with(&sc, 1, &RunOptions { audit: true }).unwrap();
    assert!(out.stats.audit.as_ref().unwrap().is_clean());
    let exits: Vec<f64> = event_times(&out.log, "EXIT").iter().map(|e| e.1).collect();
    assert_eq!(exits.len(), 200);
    let walk = WalkParams::default();
    let bound = walk.max_outflow(width);
    let lanes = walk.lanes_for_width(width) as f64;
    for w in exits.windows(2) {
        assert!(w[0] <= w[1]);
    }
    // any 20 s window, allowing one agent per lane at the window edge
    for (i, &t0) in exits.iter().enumerate() {
        let n = exits[i..].iter().take_while(|&&t| t < t0 + 20.0).count() as f64;
        assert!(n <= bound * 20.0 + lanes, "{n} exits in 20 s from {t0}");
    }
}

#[test]
fn logit_choices_converge_to_their_probabilities() {
    let model = Arc::new(firework_model([-9.76, 1.26, 0.021], 0.3));
    let departures: Vec<f64> = (0..3000).map(|i| i as f64 * 0.25).collect();
    let sc = scenario(two_routes().build().unwrap(), Mode::Firework, Policy::Dcm(model), &departures);
    let out = run(&sc, 7).unwrap();
    let mut p_long = None;
    for e in &out.log.events {
        if let EventKind::Decide { probabilities, .. } = &e.kind {
            let p = probabilities[1];
            assert_abs_diff_eq!(*p_long.get_or_insert(p), p, epsilon = 1e-12);
        }
    }
    let p = p_long.unwrap();
    let counts = route_counts(&out.log, "J", 2, false);
    let n = 3000.0;
    let share = counts[1] as f64 / n;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((share - p).abs() < 4.0 * sigma, "share {share}, probability {p}");
}

#[test]
fn same_seed_same_log() {
    let sc = scenarios::evacuation();
    let a = run(&sc, 4100).unwrap();
    let b = run(&sc, 4100).unwrap();
    assert_eq!(a.log.to_csv_bytes(), b.log.to_csv_bytes());
    let c = run(&sc, 4101).unwrap();
    assert_ne!(a.log.digest(), c.log.digest());
}

#[test]
fn thread_count_does_not_change_replications() {
    let mut sc = scenarios::evacuation();
    sc.replications = 12;
    let one: Vec<String> = replicate(&sc, 1, &RunOptions::default())
        .unwrap()
        .iter()
        .map(|o| o.log.digest())
        .collect();
    let many: Vec<String> = replicate(&sc, 4, &RunOptions::default())
        .unwrap()
        .iter()
        .map(|o| o.log.digest())
        .collect();
    assert_eq!(one, many);
}

#[test]
fn evacuation_scripted_agents_follow_their_routes() {
    let sc = scenarios::evacuation();
    let out = run_with(&sc, 4100, &RunOptions { audit: true }).unwrap();
    assert!(out.stats.audit.as_ref().unwrap().is_clean());
    audited(&out.log, &sc);
    assert_eq!(out.agents.len(), 52);
    assert_eq!(out.agents[0].route, "hall>corridor");
    assert_eq!(out.agents[9].route, "hall>landing>stairway");
    assert_eq!(out.agents[10].route, "hall>landing>stairway");
    assert_eq!(out.stats.exited, 52);
}

#[test]
fn log_survives_a_csv_round_trip() {
    let out = run(&scenarios::evacuation(), 4100).unwrap();
    let back = EventLog::read_csv(out.log.to_csv_bytes().as_slice()).unwrap();
    assert_eq!(back.digest(), out.log.digest());
}
