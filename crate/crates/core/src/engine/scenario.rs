use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::dcm::io::model_from_toml;
use crate::dcm::ChoiceModel;
use crate::features::{EVAC_FACTORS, FIREWORK_FACTORS};
use crate::network::{Network, NetworkFile, TimeValue};
use crate::walking::WalkParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Re-decide every 0.5 s from spawn until entering a route.
    Evacuation,
    /// One decision per junction, made on arrival.
    Firework,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Sp,
    Follow,
    Dcm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Minimum remaining distance.
    ShortestPath,
    /// Active guidance, else shortest path.
    Follow,
    /// Draw from a logit model.
    Dcm(Arc<ChoiceModel>),
}

impl Policy {
    pub fn name(&self) -> PolicyName {
        match self {
            Policy::ShortestPath => PolicyName::Sp,
            Policy::Follow => PolicyName::Follow,
            Policy::Dcm(_) => PolicyName::Dcm,
        }
    }
}

impl std::fmt::Display for PolicyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyName::Sp => "sp",
            PolicyName::Follow => "follow",
            PolicyName::Dcm => "dcm",
        })
    }
}

/// Departure bins: `counts[i]` agents leave `origin` during
/// `[start + i·bin_width_s, start + (i+1)·bin_width_s)`, evenly spaced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub origin: Option<String>,
    pub start: TimeValue,
    pub bin_width_s: f64,
    #[serde(default)]
    pub counts: Vec<u64>,
    /// CSV with a `count` column, one row per bin; used when `counts` is empty.
    #[serde(default)]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub departure: TimeValue,
    #[serde(default)]
    pub origin: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSpec {
    pub id: u32,
    pub departure: TimeValue,
    /// Link ids from the origin to a destination.
    pub route: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    /// Network file, relative to the scenario file.
    pub network: String,
    pub mode: Mode,
    pub policy: PolicyName,
    /// Model file for the `dcm` policy, relative to the scenario file.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rescale the schedule bins to exactly this many agents.
    #[serde(default)]
    pub total_agents: Option<u64>,
    #[serde(default = "one_metre")]
    pub distance_unit_m: f64,
    #[serde(default = "default_radius")]
    pub sensing_radius_m: f64,
    #[serde(default)]
    pub time_cap_s: Option<f64>,
    #[serde(default)]
    pub walk: WalkParams,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub scripted: Vec<ScriptedSpec>,
}

fn one() -> usize {
    1
}
fn one_metre() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    crate::features::DEFAULT_SENSING_RADIUS_M
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    pub time: f64,
    pub origin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedAgent {
    pub id: u32,
    pub departure: f64,
    pub route: Vec<usize>,
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub network: Arc<Network>,
    pub mode: Mode,
    pub policy: Policy,
    /// Free (policy-driven) agents in departure order.
    pub departures: Vec<Departure>,
    pub scripted: Vec<ScriptedAgent>,
    pub replications: usize,
    pub base_seed: u64,
    pub walk: WalkParams,
    pub distance_unit_m: f64,
    pub sensing_radius_m: f64,
    /// Simulated-time limit; defaults to the last departure plus four hours.
    pub time_cap_s: Option<f64>,
    /// Digest of every input file the scenario was built from.
    pub config_hash: String,
}

/// Largest-remainder rescaling of bin counts to an exact total. Ties in the
/// fractional parts go to the lower bin.
pub fn scale_schedule(counts: &[u64], target: u64) -> Result<Vec<u64>, EngineError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(EngineError::Scenario("departure schedule is all zero".into()));
    }
    if target == 0 {
        return Err(EngineError::Scenario("target total must be positive".into()));
    }
    let factor = target as f64 / total as f64;
    let mut scaled: Vec<u64> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        // exact integer floor avoids drift on large totals
        let whole = (c as u128 * target as u128 / total as u128) as u64;
        scaled.push(whole);
        remainders.push((c as f64 * factor - whole as f64, i));
    }
    let short = target - scaled.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(short as usize) {
        scaled[i] += 1;
    }
    Ok(scaled)
}

impl Scenario {
    /// Loads a scenario file; referenced files are resolved relative to it.
    pub fn load(path: &Path) -> Result<Scenario, EngineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_with(&text, |rel| {
            let p = dir.join(rel);
            std::fs::read_to_string(&p).map_err(|e| EngineError::Io(format!("{}: {e}", p.display())))
        })
    }

    /// Parses scenario text, fetching referenced files through `resolve`.
    pub fn from_toml_with<F>(text: &str, mut resolve: F) -> Result<Scenario, EngineError>
    where
        F: FnMut(&str) -> Result<String, EngineError>,
    {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| EngineError::Format(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let network_text = resolve(&file.network)?;
        hasher.update(network_text.as_bytes());
        let network_file: NetworkFile =
            toml::from_str(&network_text).map_err(|e| EngineError::Format(format!("{}: {e}", file.network)))?;
        let model = match &file.model {
            Some(m) => {
                let model_text = resolve(m)?;
                hasher.update(model_text.as_bytes());
                Some(model_from_toml(&model_text)?.0)
            }
            None => None,
        };
        let schedule_text = match file.schedule.as_ref().and_then(|s| s.file.as_ref()) {
            Some(f) => {
                let t = resolve(f)?;
                hasher.update(t.as_bytes());
                Some(t)
            }
            None => None,
        };
        let hash = hex::encode(hasher.finalize())[..16].to_string();
        file.build(&network_file, model, schedule_text.as_deref(), hash)
    }

    /// Replaces the policy, re-validating the model against the scenario.
    pub fn with_policy(mut self, policy: Policy) -> Result<Scenario, EngineError> {
        self.policy = policy;
        self.validate()?;
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.departures.len() + self.scripted.len()
    }

    pub fn last_departure(&self) -> f64 {
        let free = self.departures.iter().map(|d| d.time);
        let scripted = self.scripted.iter().map(|s| s.departure);
        free.chain(scripted).fold(0.0, f64::max)
    }

    pub fn effective_time_cap(&self) -> f64 {
        self.time_cap_s.unwrap_or(self.last_departure() + 4.0 * 3600.0)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Scenario(m));
        self.walk.validate().map_err(EngineError::Scenario)?;
        if self.replications == 0 {
            return bad("replication count must be at least 1".into());
        }
        if !(self.distance_unit_m.is_finite() && self.distance_unit_m > 0.0) {
            return bad("distance_unit_m must be positive".into());
        }
        if !(self.sensing_radius_m.is_finite() && self.sensing_radius_m > 0.0) {
            return bad("sensing_radius_m must be positive".into());
        }
        if self.n_agents() == 0 {
            return bad("scenario has no agents".into());
        }
        let net = &self.network;
        for pair in self.departures.windows(2) {
            if pair[1].time < pair[0].time {
                return bad("departure times must be sorted".into());
            }
        }
        for d in &self.departures {
            if !(d.time.is_finite() && d.time >= 0.0) {
                return bad(format!("departure time {} must be nonnegative", d.time));
            }
            if !net.distance_to_destination(d.origin).is_finite() {
                return bad(format!("no destination reachable from {}", net.nodes()[d.origin].id));
            }
            if net.junction_at(d.origin).is_some() {
                return bad(format!("origin {} may not be a junction node", net.nodes()[d.origin].id));
            }
        }
        let mut ids = HashSet::new();
        for s in &self.scripted {
            if !ids.insert(s.id) {
                return bad(format!("scripted agent id {} repeated", s.id));
            }
            if !(s.departure.is_finite() && s.departure >= 0.0) {
                return bad(format!("scripted agent {} has a negative departure", s.id));
            }
            self.scripted_choices(s)?;
        }
        if let Some(cap) = self.time_cap_s {
            if !(cap.is_finite() && cap > 0.0) {
                return bad("time_cap_s must be positive".into());
            }
        }
        match self.mode {
            Mode::Evacuation => {
                if net.junctions().len() != 1 {
                    return bad("evacuation mode needs exactly one junction".into());
                }
                if net.junctions()[0].alternatives.iter().any(|a| a.start_point.is_none()) {
                    return bad("evacuation mode needs a start point for every route".into());
                }
                if net.nodes().iter().any(|n| n.xy.is_none()) {
                    return bad("evacuation mode needs coordinates for every node".into());
                }
            }
            Mode::Firework => {}
        }
        if let Policy::Dcm(model) = &self.policy {
            let expected: &[&str] = match self.mode {
                Mode::Evacuation => &EVAC_FACTORS,
                Mode::Firework => &FIREWORK_FACTORS,
            };
            if model.spec().factor_names() != expected {
                return bad(format!(
                    "model factors {:?} do not match the {:?} factors {:?}",
                    model.spec().factor_names(),
                    self.mode,
                    expected
                ));
            }
            for j in net.junctions() {
                if j.alternatives.len() != model.spec().n_alternatives() {
                    return bad(format!(
                        "junction {} has {} alternatives but the model has {}",
                        j.id,
                        j.alternatives.len(),
                        model.spec().n_alternatives()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Alternative taken at every junction on a scripted route.
    pub(crate) fn scripted_choices(&self, s: &ScriptedAgent) -> Result<BTreeMap<usize, usize>, EngineError> {
        let net = &self.network;
        let bad = |m: String| Err(EngineError::Scenario(format!("scripted agent {}: {m}", s.id)));
        let Some(&first) = s.route.first() else {
            return bad("empty route".into());
        };
        let links = net.links();
        if net.junction_at(links[first].from).is_some() {
            return bad("route may not start at a junction".into());
        }
        let mut choices = BTreeMap::new();
        for pair in s.route.windows(2) {
            let (a, b) = (&links[pair[0]], &links[pair[1]]);
            if a.to != b.from {
                return bad(format!("links {} and {} are not contiguous", a.id, b.id));
            }
            if net.is_destination(a.to) {
                return bad(format!("route continues past destination {}", net.nodes()[a.to].id));
            }
            if let Some(j) = net.junction_at(a.to) {
                match net.junctions()[j].alternative_by_link(pair[1]) {
                    Some(alt) => {
                        choices.insert(j, alt);
                    }
                    None => return bad(format!("link {} is not an alternative at junction {}", b.id, net.junctions()[j].id)),
                }
            }
        }
        let last = &links[*s.route.last().expect("non-empty")];
        if !net.is_destination(last.to) {
            return bad("route does not end at a destination".into());
        }
        Ok(choices)
    }
}

impl ScenarioFile {
    pub fn build(
        &self,
        network_file: &NetworkFile,
        model: Option<ChoiceModel>,
        schedule_csv: Option<&str>,
        config_hash: String,
    ) -> Result<Scenario, EngineError> {
        let network = Arc::new(network_file.build()?);
        let origin = network_file.clock_origin_seconds()?;
        let bad = |m: String| EngineError::Scenario(m);
        let default_origin = || -> Result<usize, EngineError> {
            match network.origins() {
                [o] => Ok(*o),
                [] => Err(bad("network declares no origin".into())),
                _ => Err(bad("several origins declared; name one explicitly".into())),
            }
        };
        let node = |id: &str| network.node_index(id).ok_or_else(|| bad(format!("unknown origin {id:?}")));

        let mut departures = Vec::new();
        if let Some(s) = &self.schedule {
            if !(s.bin_width_s.is_finite() && s.bin_width_s > 0.0) {
                return Err(bad("schedule bin_width_s must be positive".into()));
            }
            let start = s.start.resolve(origin)?;
            let from = match &s.origin {
                Some(o) => node(o)?,
                None => default_origin()?,
            };
            let mut counts = s.counts.clone();
            if counts.is_empty() {
                let text = schedule_csv.ok_or_else(|| bad("schedule needs `counts` or `file`".into()))?;
                counts = read_counts(text)?;
            }
            if let Some(target) = self.total_agents {
                counts = scale_schedule(&counts, target)?;
            }
            for (i, &n) in counts.iter().enumerate() {
                let bin_start = start + i as f64 * s.bin_width_s;
                for k in 0..n {
                    departures.push(Departure {
                        time: bin_start + (k as f64 + 0.5) * s.bin_width_s / n as f64,
                        origin: from,
                    });
                }
            }
        } else if self.total_agents.is_some() {
            return Err(bad("total_agents requires a binned schedule".into()));
        }
        let mut explicit = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            explicit.push(Departure {
                time: a.departure.resolve(origin)?,
                origin: match &a.origin {
                    Some(o) => node(o)?,
                    None => default_origin()?,
                },
            });
        }
        if explicit.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(bad("agents must be listed in departure order".into()));
        }
        departures.extend(explicit);
        departures.sort_by(|a, b| a.time.total_cmp(&b.time));

        let mut scripted = Vec::with_capacity(self.scripted.len());
        for s in &self.scripted {
            let route = s
                .route
                .iter()
                .map(|l| network.link_index(l).ok_or_else(|| bad(format!("scripted agent {}: unknown link {l:?}", s.id))))
                .collect::<Result<Vec<_>, _>>()?;
            scripted.push(ScriptedAgent {
                id: s.id,
                departure: s.departure.resolve(origin)?,
                route,
            });
        }

        let policy = match (self.policy, model) {
            (PolicyName::Sp, _) => Policy::ShortestPath,
            (PolicyName::Follow, _) => Policy::Follow,
            (PolicyName::Dcm, Some(m)) => Policy::Dcm(Arc::new(m)),
            (PolicyName::Dcm, None) => return Err(bad("the dcm policy needs a model file".into())),
        };

        let scenario = Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            network,
            mode: self.mode,
            policy,
            departures,
            scripted,
            replications: self.replications,
            base_seed: self.seed,
            walk: self.walk,
            distance_unit_m: self.distance_unit_m,
            sensing_radius_m: self.sensing_radius_m,
            time_cap_s: self.time_cap_s,
            config_hash,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn read_counts(text: &str) -> Result<Vec<u64>, EngineError> {
    #[derive(Deserialize)]
    struct Row {
        count: u64,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<Row>()
        .map(|r| r.map(|r| r.count).map_err(EngineError::from))
        .collect()
}
