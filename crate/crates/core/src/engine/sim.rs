use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{AgentSummary, EventKind, EventLog};
use super::scenario::{Mode, Policy, Scenario};
use super::EngineError;
use crate::dcm::{sample_index, softmax};
use crate::features::{evac_features, EvacDecisionContext, Neighbor};
use crate::network::{ControlMode, Network};
use crate::walking::{headway, step_kinematics, stop_hold, AgentKinematics, WalkParams, LOOKAHEAD_M};

/// Walking step, s.
pub const DT: f64 = 0.1;
/// Re-decision period of evacuating pedestrians, s.
pub const EVAC_DECISION_INTERVAL_S: f64 = 0.5;
const DECISION_TICKS: u32 = 5;
const NONE: u16 = u16::MAX;
const NO_CP: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentState {
    /// Not yet in the network.
    Pending,
    Walking,
    /// Stopped at an active control point.
    Held,
    /// On the platform.
    Waiting,
    Boarded,
    /// Left through a destination without a station.
    Exited,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Check ordering, spacing, speed bounds and conservation after every tick.
    pub audit: bool,
}

/// Per-tick safety checks gathered during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicAudit {
    pub ticks_checked: u64,
    pub pairs_checked: u64,
    pub overtakes: u64,
    pub headway_violations: u64,
    pub speed_violations: u64,
    pub conservation_violations: u64,
    /// Smallest centre-to-centre gap seen between lane neighbours, m.
    pub min_gap_m: Option<f64>,
}

impl KinematicAudit {
    fn new() -> Self {
        Self {
            ticks_checked: 0,
            pairs_checked: 0,
            overtakes: 0,
            headway_violations: 0,
            speed_violations: 0,
            conservation_violations: 0,
            min_gap_m: None,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.overtakes == 0
            && self.headway_violations == 0
            && self.speed_violations == 0
            && self.conservation_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub seed: u64,
    pub ticks: u32,
    pub end_time_s: f64,
    pub agents: usize,
    pub spawned: usize,
    pub boarded: usize,
    pub exited: usize,
    pub waiting: usize,
    pub in_transit: usize,
    pub decisions: usize,
    pub truncated: bool,
    pub audit: Option<KinematicAudit>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub log: EventLog,
    pub agents: Vec<AgentSummary>,
    pub stats: RunStats,
}

struct Agent {
    scripted: Option<u32>,
    state: AgentState,
    first_link: u32,
    departure: f64,
    link: u32,
    lane: u16,
    route_pos: u16,
    committed: bool,
    next_decision: u32,
    rng: Option<Box<ChaCha8Rng>>,
    route: Vec<u32>,
    arrival: Option<u32>,
    train: Option<u32>,
}

/// Kinematic state of an agent on a link, kept in its lane for locality.
#[derive(Debug, Clone, Copy)]
struct Walker {
    id: u32,
    /// Control point holding the agent, or `NO_CP`.
    held_at: u32,
    /// Tick at whose end the agent was last moved.
    stepped: u32,
    offset: f64,
    speed: f64,
}

/// Agents on one link, per lane, front first.
type Lanes = Vec<VecDeque<Walker>>;

/// Lane a newcomer joins: the first empty lane, else the one whose rear
/// agent is furthest along (lowest index on ties). Returns the rear offset.
fn best_lane(lanes: &Lanes) -> (usize, Option<f64>) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, lane) in lanes.iter().enumerate() {
        match lane.back() {
            None => return (i, None),
            Some(rear) => {
                if rear.offset > best.1 {
                    best = (i, rear.offset);
                }
            }
        }
    }
    (best.0, Some(best.1))
}

/// One walking step on a given link.
struct Stepper<'s> {
    len: f64,
    walk: &'s WalkParams,
    stops: &'s [(usize, f64)],
    stop_active: &'s [bool],
    done: u32,
}

impl Stepper<'_> {
    /// Advances `w` by one tick, releasing or holding it at stop lines.
    /// Returns the unconfined move when the agent is free to walk; the
    /// caller decides what happens past the end of the link.
    fn advance(
        &self,
        w: &mut Walker,
        leader: Option<f64>,
        rear_next: Option<f64>,
        agents: &mut [Agent],
        log: &mut EventLog,
    ) -> Option<AgentKinematics> {
        w.stepped = self.done;
        let id = w.id;
        if w.held_at != NO_CP {
            if self.stop_active[w.held_at as usize] {
                return None;
            }
            w.held_at = NO_CP;
            let a = &mut agents[id as usize];
            a.state = AgentState::Walking;
            log.push(self.done, id, a.scripted.is_some(), EventKind::Release);
        }
        let h = headway(w.offset, self.len, leader, rear_next);
        let kin = step_kinematics(
            AgentKinematics {
                link: 0,
                offset: w.offset,
                speed: w.speed,
            },
            h,
            self.walk,
            DT,
        );
        for &(cp, stop_offset) in self.stops {
            if self.stop_active[cp] {
                let (clamped, hold) = stop_hold(w.offset, kin, stop_offset);
                if hold {
                    w.offset = clamped.offset;
                    w.speed = 0.0;
                    w.held_at = cp as u32;
                    let a = &mut agents[id as usize];
                    a.state = AgentState::Held;
                    log.push(self.done, id, a.scripted.is_some(), EventKind::Hold);
                    return None;
                }
            }
        }
        if kin.offset < self.len {
            w.offset = kin.offset;
            w.speed = kin.speed;
        }
        Some(kin)
    }
}

struct Sim<'a> {
    sc: &'a Scenario,
    net: &'a Network,
    seed: u64,
    nj: usize,
    diameter: f64,
    agents: Vec<Agent>,
    /// Latest choice per (agent, junction), `NONE` if undecided.
    choices: Vec<u16>,
    scripted_choices: Vec<Vec<u16>>,
    lanes: Vec<Lanes>,
    /// Stop lines per link, ascending offset: (control point, offset).
    stops: Vec<Vec<(usize, f64)>>,
    stop_active: Vec<bool>,
    approach_links: Vec<usize>,
    sp_alt: Vec<u16>,
    due: Vec<(u32, u32)>,
    due_pos: usize,
    spawn_queues: Vec<VecDeque<u32>>,
    queued: usize,
    deciding: Vec<u32>,
    waiting: VecDeque<u32>,
    train_ticks: Vec<u32>,
    next_train: usize,
    active: usize,
    spawned: usize,
    boarded: usize,
    exited: usize,
    decisions: usize,
    log: EventLog,
    audit: Option<KinematicAudit>,
}

/// Runs one replication.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput, EngineError> {
    run_with(scenario, seed, &RunOptions::default())
}

pub fn run_with(scenario: &Scenario, seed: u64, options: &RunOptions) -> Result<RunOutput, EngineError> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario, seed, options)?;
    let (ticks, truncated) = sim.run();
    Ok(sim.finish(ticks, truncated))
}

fn tick_at_or_after(t: f64) -> u32 {
    (t / DT - 1e-9).ceil().max(0.0) as u32
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, seed: u64, options: &RunOptions) -> Result<Self, EngineError> {
        let net: &Network = &sc.network;
        let nj = net.junctions().len();
        let n = sc.n_agents();
        let mut agents = Vec::with_capacity(n);
        let mut slot_of_scripted = vec![None; n];
        for (i, s) in sc.scripted.iter().enumerate() {
            let slot = s.id as usize;
            if slot >= n {
                return Err(EngineError::Scenario(format!(
                    "scripted agent id {} must be below the agent count {n}",
                    s.id
                )));
            }
            slot_of_scripted[slot] = Some(i);
        }
        let mut scripted_choices = Vec::with_capacity(sc.scripted.len());
        for s in &sc.scripted {
            let mut row = vec![NONE; nj];
            for (j, alt) in sc.scripted_choices(s)? {
                row[j] = alt as u16;
            }
            scripted_choices.push(row);
        }
        let mut free = sc.departures.iter();
        for slot in 0..n {
            let (scripted, departure, first_link) = match slot_of_scripted[slot] {
                Some(i) => (Some(i as u32), sc.scripted[i].departure, sc.scripted[i].route[0]),
                None => {
                    let d = free.next().expect("free agents fill the remaining ids");
                    let first = net
                        .next_link_to_destination(d.origin)
                        .ok_or_else(|| EngineError::Scenario(format!("origin {} is a dead end", net.nodes()[d.origin].id)))?;
                    (None, d.time, first)
                }
            };
            agents.push(Agent {
                scripted,
                state: AgentState::Pending,
                first_link: first_link as u32,
                departure,
                link: first_link as u32,
                lane: 0,
                route_pos: 0,
                committed: false,
                next_decision: 0,
                rng: None,
                route: Vec::new(),
                arrival: None,
                train: None,
            });
        }
        let mut due: Vec<(u32, u32)> =
            agents.iter().enumerate().map(|(i, a)| (tick_at_or_after(a.departure), i as u32)).collect();
        due.sort_unstable();

        let links = net.links();
        let lanes = links
            .iter()
            .map(|l| vec![VecDeque::new(); sc.walk.lanes_for_width(l.width)])
            .collect();
        let mut stops = vec![Vec::new(); links.len()];
        for (i, cp) in net.control_points().iter().enumerate() {
            stops[cp.link].push((i, cp.offset));
        }
        for s in &mut stops {
            s.sort_by(|a: &(usize, f64), b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        let approach_links = (0..links.len()).filter(|&l| net.junction_at(links[l].to).is_some()).collect();
        let sp_alt = net.junctions().iter().map(|j| j.shortest_alternative() as u16).collect();
        let train_ticks = net
            .station()
            .map(|s| s.trains.iter().map(|t| tick_at_or_after(t.departure)).collect())
            .unwrap_or_default();

        Ok(Sim {
            sc,
            net,
            seed,
            nj,
            diameter: sc.walk.diameter(),
            agents,
            choices: vec![NONE; n * nj],
            scripted_choices,
            lanes,
            stops,
            stop_active: vec![false; net.control_points().len()],
            approach_links,
            sp_alt,
            due,
            due_pos: 0,
            spawn_queues: vec![VecDeque::new(); links.len()],
            queued: 0,
            deciding: Vec::new(),
            waiting: VecDeque::new(),
            train_ticks,
            next_train: 0,
            active: 0,
            spawned: 0,
            boarded: 0,
            exited: 0,
            decisions: 0,
            log: EventLog {
                junctions: net.junctions().iter().map(|j| j.id.clone()).collect(),
                events: Vec::with_capacity(n * 6),
            },
            audit: options.audit.then(KinematicAudit::new),
        })
    }

    fn run(&mut self) -> (u32, bool) {
        let cap_tick = tick_at_or_after(self.sc.effective_time_cap());
        let mut k: u32 = 0;
        loop {
            if self.finished() {
                return (k, false);
            }
            if k >= cap_tick {
                return (k, true);
            }
            if self.active == 0 && self.queued == 0 {
                // nothing moves until the next spawn or train
                let next_spawn = self.due.get(self.due_pos).map(|d| d.0);
                let next_train = (!self.waiting.is_empty()).then(|| self.train_ticks.get(self.next_train).copied()).flatten();
                match next_spawn.into_iter().chain(next_train).min() {
                    Some(target) if target > k => {
                        k = target.min(cap_tick);
                        continue;
                    }
                    Some(_) => {}
                    None => return (k, true),
                }
            }
            self.board_trains(k);
            self.spawn(k);
            match self.sc.mode {
                Mode::Evacuation => self.evacuation_decisions(k),
                Mode::Firework => self.junction_decisions(k),
            }
            self.update_control_points(k);
            self.movement(k);
            if self.audit.is_some() {
                self.audit_tick();
            }
            k += 1;
        }
    }

    fn finished(&self) -> bool {
        self.due_pos == self.due.len()
            && self.queued == 0
            && self.active == 0
            && (self.waiting.is_empty() || self.next_train >= self.train_ticks.len())
    }

    fn is_scripted(&self, id: u32) -> bool {
        self.agents[id as usize].scripted.is_some()
    }

    fn board_trains(&mut self, k: u32) {
        let Some(station) = self.net.station() else { return };
        while self.next_train < self.train_ticks.len() && self.train_ticks[self.next_train] <= k {
            let train = self.next_train;
            let mut seats = station.trains[train].capacity;
            while seats > 0 {
                let Some(id) = self.waiting.pop_front() else { break };
                seats -= 1;
                let a = &mut self.agents[id as usize];
                a.state = AgentState::Boarded;
                a.train = Some(train as u32);
                self.boarded += 1;
                let scripted = a.scripted.is_some();
                self.log.push(k, id, scripted, EventKind::Board { train: train as u32 });
            }
            self.next_train += 1;
        }
    }

    fn spawn(&mut self, k: u32) {
        while let Some(&(tick, id)) = self.due.get(self.due_pos) {
            if tick > k {
                break;
            }
            let link = self.agents[id as usize].first_link as usize;
            self.spawn_queues[link].push_back(id);
            self.queued += 1;
            self.due_pos += 1;
        }
        if self.queued == 0 {
            return;
        }
        for link in 0..self.spawn_queues.len() {
            while let Some(&id) = self.spawn_queues[link].front() {
                let (lane, rear) = best_lane(&self.lanes[link]);
                if rear.is_some_and(|r| r < self.diameter) {
                    break;
                }
                self.spawn_queues[link].pop_front();
                self.queued -= 1;
                self.lanes[link][lane].push_back(Walker {
                    id,
                    held_at: NO_CP,
                    stepped: 0,
                    offset: 0.0,
                    speed: 0.0,
                });
                let a = &mut self.agents[id as usize];
                a.state = AgentState::Walking;
                a.link = link as u32;
                a.lane = lane as u16;
                a.route.push(link as u32);
                a.next_decision = k;
                self.active += 1;
                self.spawned += 1;
                let scripted = a.scripted.is_some();
                if self.sc.mode == Mode::Evacuation && !scripted {
                    self.deciding.push(id);
                }
                self.log.push(k, id, scripted, EventKind::Spawn);
                if self.sc.mode == Mode::Evacuation && scripted {
                    self.record_scripted_decision(k, id, 0);
                }
            }
        }
    }

    fn record_scripted_decision(&mut self, k: u32, id: u32, junction: usize) {
        let s = self.agents[id as usize].scripted.expect("scripted agent") as usize;
        let alt = self.scripted_choices[s][junction];
        if alt == NONE {
            return;
        }
        let n_alt = self.net.junctions()[junction].alternatives.len();
        let mut p = vec![0.0; n_alt];
        p[alt as usize] = 1.0;
        self.record_decision(k, id, junction, alt as usize, p);
    }

    fn record_decision(&mut self, k: u32, id: u32, junction: usize, alt: usize, probabilities: Vec<f64>) {
        self.choices[id as usize * self.nj + junction] = alt as u16;
        self.decisions += 1;
        let scripted = self.is_scripted(id);
        self.log.push(
            k,
            id,
            scripted,
            EventKind::Decide {
                junction: junction as u16,
                alternative: alt as u16,
                probabilities: probabilities.into_boxed_slice(),
            },
        );
    }

    /// Chooses by the scenario policy given a feature matrix.
    fn apply_policy(&mut self, id: u32, junction: usize, t: f64, features: impl FnOnce() -> crate::dcm::FeatureMatrix) -> (usize, Vec<f64>) {
        let n_alt = self.net.junctions()[junction].alternatives.len();
        let one_hot = |j: usize| {
            let mut p = vec![0.0; n_alt];
            p[j] = 1.0;
            (j, p)
        };
        match &self.sc.policy {
            Policy::ShortestPath => one_hot(self.sp_alt[junction] as usize),
            Policy::Follow => {
                let j = self.net.junctions()[junction]
                    .guided_alternative(t)
                    .unwrap_or(self.sp_alt[junction] as usize);
                one_hot(j)
            }
            Policy::Dcm(model) => {
                let x = features();
                let p = softmax(&model.utilities_unchecked(&x));
                let seed = self.seed;
                let rng = self.agents[id as usize].rng.get_or_insert_with(|| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    r.set_stream(u64::from(id));
                    Box::new(r)
                });
                let j = sample_index(&p, rng.random::<f64>());
                (j, p)
            }
        }
    }

    /// Planar position of a walker, shifted sideways to its lane's centre.
    fn walker_position(&self, link: usize, lane: usize, offset: f64) -> [f64; 2] {
        let centre = self.net.position_on_link(link, offset).expect("validated embedding");
        let Some(h) = self.net.link_heading(link) else { return centre };
        let width = self.net.links()[link].width;
        let n_lanes = self.lanes[link].len() as f64;
        let lateral = (lane as f64 + 0.5) * width / n_lanes - width / 2.0;
        [centre[0] - h[1] * lateral, centre[1] + h[0] * lateral]
    }

    fn evacuation_decisions(&mut self, k: u32) {
        self.deciding.retain(|&id| {
            let a = &self.agents[id as usize];
            !a.committed && matches!(a.state, AgentState::Walking | AgentState::Held)
        });
        let due: Vec<u32> = self
            .deciding
            .iter()
            .copied()
            .filter(|&id| self.agents[id as usize].next_decision <= k)
            .collect();
        if due.is_empty() {
            return;
        }
        // simultaneous decisions from one snapshot of positions and choices
        let mut snapshot: Vec<(u32, Neighbor)> = Vec::new();
        let mut position_of = vec![[0.0; 2]; self.agents.len()];
        for (li, lanes) in self.lanes.iter().enumerate() {
            for (lane, walkers) in lanes.iter().enumerate() {
                for w in walkers {
                    let position = self.walker_position(li, lane, w.offset);
                    position_of[w.id as usize] = position;
                    let c = self.choices[w.id as usize * self.nj];
                    if c != NONE {
                        snapshot.push((
                            w.id,
                            Neighbor {
                                position,
                                choice: c as usize,
                            },
                        ));
                    }
                }
            }
        }
        let junction = &self.net.junctions()[0];
        let starts: Vec<[f64; 2]> = junction.alternatives.iter().map(|a| a.start_point.expect("validated")).collect();
        let t = k as f64 * DT;
        let mut outcomes = Vec::with_capacity(due.len());
        for &id in &due {
            let position = position_of[id as usize];
            let link = self.agents[id as usize].link as usize;
            let heading = self.net.link_heading(link).unwrap_or([1.0, 0.0]);
            let prev = self.choices[id as usize * self.nj];
            let r2 = self.sc.sensing_radius_m * self.sc.sensing_radius_m;
            let neighbors: Vec<Neighbor> = snapshot
                .iter()
                .filter(|(other, nb)| {
                    *other != id && {
                        let dx = nb.position[0] - position[0];
                        let dy = nb.position[1] - position[1];
                        dx * dx + dy * dy <= r2
                    }
                })
                .map(|(_, nb)| *nb)
                .collect();
            let ctx = EvacDecisionContext {
                position,
                heading,
                route_starts: &starts,
                previous_choice: (prev != NONE).then_some(prev as usize),
                neighbors: &neighbors,
                sensing_radius: self.sc.sensing_radius_m,
                distance_unit_m: self.sc.distance_unit_m,
            };
            let features = evac_features(&ctx);
            outcomes.push((id, features));
        }
        for (id, features) in outcomes {
            let (alt, p) = self.apply_policy(id, 0, t, || features);
            self.record_decision(k, id, 0, alt, p);
            self.agents[id as usize].next_decision = k + DECISION_TICKS;
        }
    }

    fn junction_decisions(&mut self, k: u32) {
        let t = k as f64 * DT;
        for idx in 0..self.approach_links.len() {
            let li = self.approach_links[idx];
            let link = &self.net.links()[li];
            let j = self.net.junction_at(link.to).expect("approach link");
            for lane in 0..self.lanes[li].len() {
                let Some(&front) = self.lanes[li][lane].front() else { continue };
                let id = front.id;
                if self.choices[id as usize * self.nj + j] != NONE || front.offset < link.length - LOOKAHEAD_M {
                    continue;
                }
                if self.is_scripted(id) {
                    self.record_scripted_decision(k, id, j);
                } else {
                    let net = self.net;
                    let unit = self.sc.distance_unit_m;
                    let (alt, p) = self.apply_policy(id, j, t, || net.junction_features(j, t, unit));
                    self.record_decision(k, id, j, alt, p);
                }
            }
        }
    }

    fn update_control_points(&mut self, k: u32) {
        let t = k as f64 * DT;
        for (i, cp) in self.net.control_points().iter().enumerate() {
            self.stop_active[i] = cp.mode(t) == ControlMode::Stop;
        }
    }

    fn next_link(&self, id: u32, link: usize) -> Option<usize> {
        let a = &self.agents[id as usize];
        if let Some(s) = a.scripted {
            return self.sc.scripted[s as usize].route.get(a.route_pos as usize + 1).copied();
        }
        let node = self.net.links()[link].to;
        match self.net.junction_at(node) {
            Some(j) => {
                let c = self.choices[id as usize * self.nj + j];
                (c != NONE).then(|| self.net.junctions()[j].alternatives[c as usize].first_link)
            }
            None => self.net.next_link_to_destination(node),
        }
    }

    fn movement(&mut self, k: u32) {
        let done = k + 1;
        let walk = self.sc.walk;
        let station = self.net.station().map(|s| (s.node, s.platform_capacity));
        // detached so stepping can borrow them alongside mutable lanes
        let stops = std::mem::take(&mut self.stops);
        let stop_active = std::mem::take(&mut self.stop_active);
        for li in 0..self.lanes.len() {
            let link = &self.net.links()[li];
            let (len, to) = (link.length, link.to);
            let to_destination = self.net.is_destination(to);
            let at_station = to_destination && station.is_some_and(|(node, _)| node == to);
            let step = Stepper {
                len,
                walk: &walk,
                stops: &stops[li],
                stop_active: &stop_active,
                done,
            };
            for lane in 0..self.lanes[li].len() {
                // only the front agent can reach the end of the link
                while let Some(&front) = self.lanes[li][lane].front() {
                    if front.stepped == done {
                        // arrived from another link this tick; everything behind it did too
                        break;
                    }
                    let mut w = front;
                    let mut rear_next = None;
                    if !to_destination && w.offset >= len - LOOKAHEAD_M {
                        if let Some(nl) = self.next_link(w.id, li) {
                            rear_next = best_lane(&self.lanes[nl]).1;
                        }
                    }
                    let kin = step.advance(&mut w, None, rear_next, &mut self.agents, &mut self.log);
                    let Some(kin) = kin.filter(|kin| kin.offset >= len) else {
                        self.lanes[li][lane][0] = w;
                        break;
                    };
                    if self.leave_link(li, lane, to, to_destination, at_station, station, w, kin, done) {
                        continue;
                    }
                    // blocked, undecided or no room on the platform: wait at the link end
                    w.offset = len;
                    w.speed = 0.0;
                    self.lanes[li][lane][0] = w;
                    break;
                }
                let mut walkers = self.lanes[li][lane].iter_mut();
                let Some(front) = walkers.next() else { continue };
                let mut leader = front.offset;
                for w in walkers {
                    if w.stepped == done {
                        break;
                    }
                    step.advance(w, Some(leader), None, &mut self.agents, &mut self.log);
                    leader = w.offset;
                }
            }
        }
        self.stops = stops;
        self.stop_active = stop_active;
    }

    /// Moves the front agent of a lane off its link if it can go anywhere.
    #[allow(clippy::too_many_arguments)]
    fn leave_link(
        &mut self,
        li: usize,
        lane: usize,
        to: usize,
        to_destination: bool,
        at_station: bool,
        station: Option<(usize, Option<usize>)>,
        mut w: Walker,
        kin: AgentKinematics,
        done: u32,
    ) -> bool {
        let len = self.net.links()[li].length;
        let id = w.id;
        if to_destination {
            if at_station {
                let room = station.and_then(|(_, cap)| cap).is_none_or(|cap| self.waiting.len() < cap);
                if !room {
                    return false;
                }
            }
            self.lanes[li][lane].pop_front();
            self.active -= 1;
            let a = &mut self.agents[id as usize];
            a.arrival = Some(done);
            a.rng = None;
            let scripted = a.scripted.is_some();
            if at_station {
                a.state = AgentState::Waiting;
                self.waiting.push_back(id);
                self.log.push(done, id, scripted, EventKind::ArriveStation);
            } else {
                a.state = AgentState::Exited;
                self.exited += 1;
                self.log.push(done, id, scripted, EventKind::Exit);
            }
            return true;
        }
        let target = self.next_link(id, li).and_then(|nl| {
            let (new_lane, rear) = best_lane(&self.lanes[nl]);
            let mut entry = (kin.offset - len).min(self.net.links()[nl].length);
            if let Some(r) = rear {
                let cap = r - self.diameter;
                if cap < 0.0 {
                    return None;
                }
                entry = entry.min(cap);
            }
            Some((nl, new_lane, entry))
        });
        let Some((nl, new_lane, entry)) = target else { return false };
        self.lanes[li][lane].pop_front();
        w.offset = entry;
        w.speed = kin.speed;
        self.lanes[nl][new_lane].push_back(w);
        let evac_commit = self.sc.mode == Mode::Evacuation && self.net.junction_at(to).is_some();
        let a = &mut self.agents[id as usize];
        a.link = nl as u32;
        a.lane = new_lane as u16;
        a.route.push(nl as u32);
        if a.scripted.is_some() {
            a.route_pos += 1;
        }
        if evac_commit {
            a.committed = true;
        }
        true
    }

    fn audit_tick(&mut self) {
        let audit = self.audit.as_mut().expect("audit enabled");
        audit.ticks_checked += 1;
        let mut in_lanes = 0usize;
        for lanes in &self.lanes {
            for lane in lanes {
                in_lanes += lane.len();
                for (i, w) in lane.iter().enumerate() {
                    if !(0.0..=self.sc.walk.max_speed + 1e-12).contains(&w.speed) {
                        audit.speed_violations += 1;
                    }
                    if i == 0 {
                        continue;
                    }
                    let gap = lane[i - 1].offset - w.offset;
                    audit.pairs_checked += 1;
                    if gap < 0.0 {
                        audit.overtakes += 1;
                    }
                    if gap < self.diameter - 1e-9 {
                        audit.headway_violations += 1;
                    }
                    audit.min_gap_m = Some(audit.min_gap_m.map_or(gap, |m: f64| m.min(gap)));
                }
            }
        }
        let accounted = self.active + self.waiting.len() + self.boarded + self.exited;
        if in_lanes != self.active || accounted != self.spawned {
            audit.conservation_violations += 1;
        }
    }

    fn finish(self, ticks: u32, truncated: bool) -> RunOutput {
        let mut log = self.log;
        let links = self.net.links();
        let agents: Vec<AgentSummary> = self
            .agents
            .iter()
            .enumerate()
            .map(|(id, a)| AgentSummary {
                id: id as u32,
                scripted: a.scripted.is_some(),
                departure: a.departure,
                route: a.route.iter().map(|&l| links[l as usize].id.as_str()).collect::<Vec<_>>().join(">"),
                arrival: a.arrival.map(|t| t as f64 * DT),
                train: a.train,
                state: a.state,
            })
            .collect();
        let terminal = agents
            .iter()
            .filter(|a| matches!(a.state, AgentState::Boarded | AgentState::Exited))
            .count();
        let truncated = truncated || terminal < agents.len();
        if truncated {
            log.push(ticks, 0, false, EventKind::Truncated);
        }
        let stats = RunStats {
            seed: self.seed,
            ticks,
            end_time_s: ticks as f64 * DT,
            agents: agents.len(),
            spawned: self.spawned,
            boarded: self.boarded,
            exited: self.exited,
            waiting: self.waiting.len(),
            in_transit: self.active,
            decisions: self.decisions,
            truncated,
            audit: self.audit,
        };
        RunOutput {
            seed: self.seed,
            log,
            agents,
            stats,
        }
    }
}
