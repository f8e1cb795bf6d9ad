use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;

use super::log::{EventKind, EventLog};
use super::scenario::Mode;
use super::sim::DT;
use crate::network::Network;

/// Outcome of replaying an event log against the engine's rules.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub events: usize,
    pub spawned: usize,
    pub arrived: usize,
    pub boarded: usize,
    pub exited: usize,
    pub waiting_at_end: usize,
    pub in_transit_at_end: usize,
    pub truncated: bool,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Walking,
    Held,
    Waiting,
    Done,
}

/// Checks a log for ordering, per-agent lifecycle, conservation, train
/// capacity, FIFO boarding and (in firework mode) one decision per junction.
pub fn audit_log(log: &EventLog, network: &Network, mode: Mode) -> AuditReport {
    let mut r = AuditReport {
        events: log.events.len(),
        ..Default::default()
    };
    const MAX_REPORTED: usize = 50;
    let violate = |r: &mut AuditReport, msg: String| {
        if r.violations.len() < MAX_REPORTED {
            r.violations.push(msg);
        }
    };

    let junction_of: Vec<Option<usize>> = log.junctions.iter().map(|j| network.junction_index(j)).collect();
    let trains = network.station().map(|s| s.trains.as_slice()).unwrap_or_default();
    let mut phase: HashMap<u32, Phase> = HashMap::new();
    let mut decided: HashSet<(u32, u16)> = HashSet::new();
    let mut platform: VecDeque<u32> = VecDeque::new();
    let mut per_train = vec![0usize; trains.len()];
    let mut last_tick = 0;

    for (i, e) in log.events.iter().enumerate() {
        if e.tick < last_tick {
            violate(&mut r, format!("event {i}: time goes backwards ({} after {})", e.time(), last_tick as f64 * DT));
        }
        last_tick = e.tick;
        if e.kind == EventKind::Truncated {
            r.truncated = true;
            if i + 1 != log.events.len() {
                violate(&mut r, format!("event {i}: TRUNCATED is not the last event"));
            }
            continue;
        }
        let state = phase.get(&e.agent).copied();
        let ctx = || format!("event {i} (t={:.1}, agent {}, {})", e.time(), e.agent, e.kind.label());
        match &e.kind {
            EventKind::Spawn => {
                if state.is_some() {
                    violate(&mut r, format!("{}: spawned twice", ctx()));
                }
                phase.insert(e.agent, Phase::Walking);
                r.spawned += 1;
            }
            EventKind::Decide {
                junction,
                alternative,
                probabilities,
            } => {
                if !matches!(state, Some(Phase::Walking | Phase::Held)) {
                    violate(&mut r, format!("{}: decision outside the network", ctx()));
                }
                match junction_of.get(*junction as usize).copied().flatten() {
                    None => violate(&mut r, format!("{}: unknown junction", ctx())),
                    Some(j) => {
                        let n_alt = network.junctions()[j].alternatives.len();
                        if *alternative as usize >= n_alt || probabilities.len() != n_alt {
                            violate(&mut r, format!("{}: alternative out of range", ctx()));
                        }
                    }
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-9 || probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    violate(&mut r, format!("{}: probabilities do not form a distribution", ctx()));
                }
                if mode == Mode::Firework && !decided.insert((e.agent, *junction)) {
                    violate(&mut r, format!("{}: second decision at the same junction", ctx()));
                }
            }
            EventKind::Hold => {
                if state != Some(Phase::Walking) {
                    violate(&mut r, format!("{}: hold while not walking", ctx()));
                }
                phase.insert(e.agent, Phase::Held);
            }
            EventKind::Release => {
                if state != Some(Phase::Held) {
                    violate(&mut r, format!("{}: release while not held", ctx()));
                }
                phase.insert(e.agent, Phase::Walking);
            }
            EventKind::ArriveStation => {
                if state != Some(Phase::Walking) {
                    violate(&mut r, format!("{}: arrival while not walking", ctx()));
                }
                phase.insert(e.agent, Phase::Waiting);
                platform.push_back(e.agent);
                r.arrived += 1;
                if let Some(cap) = network.station().and_then(|s| s.platform_capacity) {
                    if platform.len() > cap {
                        violate(&mut r, format!("{}: platform over capacity", ctx()));
                    }
                }
            }
            EventKind::Exit => {
                if state != Some(Phase::Walking) {
                    violate(&mut r, format!("{}: exit while not walking", ctx()));
                }
                phase.insert(e.agent, Phase::Done);
                r.exited += 1;
            }
            EventKind::Board { train } => {
                if state != Some(Phase::Waiting) {
                    violate(&mut r, format!("{}: boarding without waiting", ctx()));
                }
                match platform.pop_front() {
                    Some(first) if first == e.agent => {}
                    _ => violate(&mut r, format!("{}: boarding out of arrival order", ctx())),
                }
                platform.retain(|&a| a != e.agent);
                phase.insert(e.agent, Phase::Done);
                r.boarded += 1;
                match trains.get(*train as usize) {
                    None => violate(&mut r, format!("{}: unknown train", ctx())),
                    Some(tr) => {
                        per_train[*train as usize] += 1;
                        if per_train[*train as usize] > tr.capacity {
                            violate(&mut r, format!("{}: train over capacity", ctx()));
                        }
                        let t = e.time();
                        if t + 1e-9 < tr.departure || t >= tr.departure + DT + 1e-9 {
                            violate(&mut r, format!("{}: boarding away from the departure time", ctx()));
                        }
                    }
                }
            }
            EventKind::Truncated => unreachable!(),
        }
    }

    r.waiting_at_end = platform.len();
    r.in_transit_at_end = r.spawned.saturating_sub(r.arrived + r.exited);
    if r.arrived < r.boarded || r.spawned != r.boarded + r.exited + r.waiting_at_end + r.in_transit_at_end {
        let msg = format!(
            "conservation: spawned {} != boarded {} + exited {} + waiting {} + in transit {}",
            r.spawned, r.boarded, r.exited, r.waiting_at_end, r.in_transit_at_end
        );
        violate(&mut r, msg);
    }
    if !r.truncated && (r.in_transit_at_end > 0 || r.waiting_at_end > 0) {
        violate(&mut r, "agents left in the network without a TRUNCATED marker".into());
    }
    r
}
