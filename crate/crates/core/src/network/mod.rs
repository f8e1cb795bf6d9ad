//! Directed link/node representation of walkable space.
//!
//! Links carry a length and a width; junctions enumerate the route
//! alternatives offered at a decision node (alternative 0 is the route nearer
//! to the destination); control points stop and release flow on a schedule;
//! an optional station boards waiting pedestrians onto timetabled trains.

mod io;
mod schedule;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

pub use io::{parse_clock, LinkSpec, NetworkFile, TimeValue};
pub use schedule::{ControlMode, Interval, Schedule};

use crate::dcm::{FeatureMatrix, UtilitySpec};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown link {0:?}")]
    UnknownLink(String),
    #[error("duplicate id {0:?}")]
    Duplicate(String),
    #[error("invalid link {id:?}: {reason}")]
    InvalidLink { id: String, reason: String },
    #[error("invalid junction {id:?}: {reason}")]
    InvalidJunction { id: String, reason: String },
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("station: {0}")]
    Station(String),
    #[error("no path from {from:?} to {to:?}")]
    NoPath { from: String, to: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    /// Planar embedding in metres, used for visualization and geometric factors.
    pub xy: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionAlternative {
    pub name: String,
    pub first_link: usize,
    /// Distance to the nearest destination when taking this alternative, metres.
    pub remaining_m: f64,
    /// Intervals during which an attraction (e.g. open stalls) lies on this route.
    pub attraction: Schedule<()>,
    /// Planar start point of the route, for distance-to-route factors.
    pub start_point: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: String,
    pub node: usize,
    pub alternatives: Vec<JunctionAlternative>,
    /// Guided alternative over time; no entry means no alternative is favoured.
    pub guidance: Schedule<usize>,
}

impl Junction {
    pub fn alternative_by_link(&self, link: usize) -> Option<usize> {
        self.alternatives.iter().position(|a| a.first_link == link)
    }

    pub fn guided_alternative(&self, t: f64) -> Option<usize> {
        self.guidance.at(t).copied()
    }

    /// Alternative with the least remaining distance, lowest index on ties.
    pub fn shortest_alternative(&self) -> usize {
        let mut best = 0;
        for (j, alt) in self.alternatives.iter().enumerate().skip(1) {
            if alt.remaining_m < self.alternatives[best].remaining_m {
                best = j;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint {
    pub id: String,
    pub link: usize,
    /// Stop line position along the link, metres from its start.
    pub offset: f64,
    pub schedule: Schedule<ControlMode>,
}

impl ControlPoint {
    /// Mode at `t`; flow proceeds whenever no interval applies.
    pub fn mode(&self, t: f64) -> ControlMode {
        self.schedule.at(t).copied().unwrap_or(ControlMode::Proceed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Train {
    pub departure: f64,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub node: usize,
    /// Maximum number of people waiting on the platform; `None` is unbounded.
    pub platform_capacity: Option<usize>,
    pub trains: Vec<Train>,
}

/// Immutable walkable network.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    junctions: Vec<Junction>,
    control_points: Vec<ControlPoint>,
    station: Option<Station>,
    origins: Vec<usize>,
    destinations: Vec<usize>,
    out_links: Vec<Vec<usize>>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
    junction_at_node: Vec<Option<usize>>,
    to_destination: DistanceField,
}

impl Network {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn links(&self) -> &[Link] {
        &self.links
    }
    pub fn junctions(&self) -> &[Junction] {
        &self.junctions
    }
    pub fn control_points(&self) -> &[ControlPoint] {
        &self.control_points
    }
    pub fn station(&self) -> Option<&Station> {
        self.station.as_ref()
    }
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }
    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }
    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out_links[node]
    }
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }
    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }
    pub fn junction_index(&self, id: &str) -> Option<usize> {
        self.junctions.iter().position(|j| j.id == id)
    }
    /// Junction located at `node`, if any.
    pub fn junction_at(&self, node: usize) -> Option<usize> {
        self.junction_at_node[node]
    }
    pub fn is_destination(&self, node: usize) -> bool {
        self.destinations.contains(&node)
    }

    /// Distance from `node` to the nearest destination.
    pub fn distance_to_destination(&self, node: usize) -> f64 {
        self.to_destination.dist[node]
    }

    /// First link of a shortest path from `node` to the nearest destination.
    pub fn next_link_to_destination(&self, node: usize) -> Option<usize> {
        self.to_destination.next_link[node]
    }

    /// Exact shortest walking distance between two nodes.
    pub fn shortest_distance(&self, from: usize, to: usize) -> Result<f64, NetworkError> {
        let field = DistanceField::towards(self, &[to]);
        let d = field.dist[from];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(NetworkError::NoPath {
                from: self.nodes[from].id.clone(),
                to: self.nodes[to].id.clone(),
            })
        }
    }

    pub fn shortest_distance_by_id(&self, from: &str, to: &str) -> Result<f64, NetworkError> {
        let f = self.node_index(from).ok_or_else(|| NetworkError::UnknownNode(from.into()))?;
        let t = self.node_index(to).ok_or_else(|| NetworkError::UnknownNode(to.into()))?;
        self.shortest_distance(f, t)
    }

    /// Planar position at `offset` metres along `link`, if both endpoints are embedded.
    pub fn position_on_link(&self, link: usize, offset: f64) -> Option<[f64; 2]> {
        let l = &self.links[link];
        let a = self.nodes[l.from].xy?;
        let b = self.nodes[l.to].xy?;
        let f = (offset / l.length).clamp(0.0, 1.0);
        Some([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])])
    }

    /// Unit direction of travel along `link` in the planar embedding.
    pub fn link_heading(&self, link: usize) -> Option<[f64; 2]> {
        let l = &self.links[link];
        let a = self.nodes[l.from].xy?;
        let b = self.nodes[l.to].xy?;
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let n = dx.hypot(dy);
        (n > 0.0).then(|| [dx / n, dy / n])
    }

    /// Factor matrix (DIST, GUIDE, ATT) for a one-shot choice at `junction`.
    ///
    /// DIST is the remaining distance via each alternative measured from the
    /// junction node, divided by `distance_unit_m`.
    pub fn junction_features(&self, junction: usize, t: f64, distance_unit_m: f64) -> FeatureMatrix {
        let junction = &self.junctions[junction];
        let guided = junction.guided_alternative(t);
        let mut x = FeatureMatrix::zeros(junction.alternatives.len(), 3);
        for (j, alt) in junction.alternatives.iter().enumerate() {
            x.set(j, 0, alt.remaining_m / distance_unit_m);
            x.set(j, 1, if guided == Some(j) { 1.0 } else { 0.0 });
            x.set(j, 2, if alt.attraction.at(t).is_some() { 1.0 } else { 0.0 });
        }
        x
    }

    /// Utility specification matching [`Network::junction_features`] for a junction.
    pub fn junction_spec(&self, junction: usize) -> UtilitySpec {
        let names: Vec<String> = self.junctions[junction].alternatives.iter().map(|a| a.name.clone()).collect();
        UtilitySpec::new(vec!["DIST".into(), "GUIDE".into(), "ATT".into()], names, 0)
            .expect("validated junction has at least two alternatives")
    }

    /// Latest time at which any schedule in the network changes.
    pub fn schedule_horizon(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cp in &self.control_points {
            h = h.max(cp.schedule.horizon().unwrap_or(0.0));
        }
        for j in &self.junctions {
            h = h.max(j.guidance.horizon().unwrap_or(0.0));
        }
        h
    }
}

/// Shortest distances from every node to a target set, with the first link
/// of a shortest path. Ties prefer the lower link index.
#[derive(Debug, Clone)]
struct DistanceField {
    dist: Vec<f64>,
    next_link: Vec<Option<usize>>,
}

#[derive(PartialEq)]
struct QueueEntry {
    dist: f64,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DistanceField {
    /// Dijkstra on the reversed graph from `targets`.
    fn towards(network: &Network, targets: &[usize]) -> Self {
        Self::towards_raw(network.nodes.len(), &network.links, targets)
    }

    fn towards_raw(n_nodes: usize, links: &[Link], targets: &[usize]) -> Self {
        let mut in_links = vec![Vec::new(); n_nodes];
        for (i, l) in links.iter().enumerate() {
            in_links[l.to].push(i);
        }
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut next_link = vec![None; n_nodes];
        let mut heap = BinaryHeap::new();
        for &t in targets {
            dist[t] = 0.0;
            heap.push(QueueEntry { dist: 0.0, node: t });
        }
        while let Some(QueueEntry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &li in &in_links[node] {
                let l = &links[li];
                let nd = d + l.length;
                let better = nd < dist[l.from] || (nd == dist[l.from] && next_link[l.from].is_some_and(|cur| li < cur));
                if better {
                    let improved = nd < dist[l.from];
                    dist[l.from] = nd;
                    next_link[l.from] = Some(li);
                    if improved {
                        heap.push(QueueEntry { dist: nd, node: l.from });
                    }
                }
            }
        }
        Self { dist, next_link }
    }
}

/// Incremental constructor; validates everything in [`NetworkBuilder::build`].
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    links: Vec<(String, String, String, f64, f64)>,
    junctions: Vec<JunctionDraft>,
    control_points: Vec<ControlPointDraft>,
    station: Option<(String, Option<usize>, Vec<Train>)>,
    origins: Vec<String>,
    destinations: Vec<String>,
}

#[derive(Debug, Clone)]
struct JunctionDraft {
    id: String,
    node: String,
    alternatives: Vec<AlternativeDraft>,
    guidance: Vec<(Interval, usize)>,
}

/// Route option at a junction, prior to validation.
#[derive(Debug, Clone)]
pub struct AlternativeDraft {
    pub name: String,
    pub first_link: String,
    pub remaining_m: Option<f64>,
    pub attraction: Vec<Interval>,
    pub start_point: Option<[f64; 2]>,
}

impl AlternativeDraft {
    pub fn new(name: impl Into<String>, first_link: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            first_link: first_link.into(),
            remaining_m: None,
            attraction: Vec::new(),
            start_point: None,
        }
    }

    pub fn remaining(mut self, metres: f64) -> Self {
        self.remaining_m = Some(metres);
        self
    }

    pub fn attraction(mut self, interval: Interval) -> Self {
        self.attraction.push(interval);
        self
    }

    pub fn start_point(mut self, xy: [f64; 2]) -> Self {
        self.start_point = Some(xy);
        self
    }
}

#[derive(Debug, Clone)]
enum CpLocation {
    Link(String, f64),
    Node(String),
}

#[derive(Debug, Clone)]
struct ControlPointDraft {
    id: String,
    location: CpLocation,
    schedule: Vec<(Interval, ControlMode)>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: &str, xy: Option<[f64; 2]>) -> Self {
        self.nodes.push(Node { id: id.into(), xy });
        self
    }

    pub fn link(mut self, id: &str, from: &str, to: &str, length: f64, width: f64) -> Self {
        self.links.push((id.into(), from.into(), to.into(), length, width));
        self
    }

    pub fn origin(mut self, node: &str) -> Self {
        self.origins.push(node.into());
        self
    }

    pub fn destination(mut self, node: &str) -> Self {
        self.destinations.push(node.into());
        self
    }

    pub fn junction(mut self, id: &str, node: &str, alternatives: Vec<AlternativeDraft>) -> Self {
        self.junctions.push(JunctionDraft {
            id: id.into(),
            node: node.into(),
            alternatives,
            guidance: Vec::new(),
        });
        self
    }

    pub fn guidance(mut self, junction: &str, interval: Interval, alternative: usize) -> Self {
        if let Some(j) = self.junctions.iter_mut().find(|j| j.id == junction) {
            j.guidance.push((interval, alternative));
        } else {
            // surfaced at build time
            self.junctions.push(JunctionDraft {
                id: junction.into(),
                node: String::new(),
                alternatives: Vec::new(),
                guidance: vec![(interval, alternative)],
            });
        }
        self
    }

    pub fn control_point_on_link(
        mut self,
        id: &str,
        link: &str,
        offset: f64,
        schedule: Vec<(Interval, ControlMode)>,
    ) -> Self {
        self.control_points.push(ControlPointDraft {
            id: id.into(),
            location: CpLocation::Link(link.into(), offset),
            schedule,
        });
        self
    }

    /// Control point at a node: a stop line at the end of every incoming link.
    pub fn control_point_at_node(mut self, id: &str, node: &str, schedule: Vec<(Interval, ControlMode)>) -> Self {
        self.control_points.push(ControlPointDraft {
            id: id.into(),
            location: CpLocation::Node(node.into()),
            schedule,
        });
        self
    }

    pub fn station(mut self, node: &str, platform_capacity: Option<usize>, trains: Vec<Train>) -> Self {
        self.station = Some((node.into(), platform_capacity, trains));
        self
    }

    pub fn build(self) -> Result<Network, NetworkError> {
        let mut node_index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(NetworkError::Duplicate(n.id.clone()));
            }
        }
        let lookup_node = |id: &str| node_index.get(id).copied().ok_or_else(|| NetworkError::UnknownNode(id.into()));

        let mut links = Vec::with_capacity(self.links.len());
        let mut link_index = HashMap::new();
        for (id, from, to, length, width) in &self.links {
            let invalid = |reason: &str| NetworkError::InvalidLink {
                id: id.clone(),
                reason: reason.into(),
            };
            if !(length.is_finite() && *length > 0.0) {
                return Err(invalid("length must be positive"));
            }
            if !(width.is_finite() && *width > 0.0) {
                return Err(invalid("width must be positive"));
            }
            if link_index.insert(id.clone(), links.len()).is_some() {
                return Err(NetworkError::Duplicate(id.clone()));
            }
            links.push(Link {
                id: id.clone(),
                from: lookup_node(from)?,
                to: lookup_node(to)?,
                length: *length,
                width: *width,
            });
        }
        let lookup_link = |id: &str| link_index.get(id).copied().ok_or_else(|| NetworkError::UnknownLink(id.into()));

        let mut out_links = vec![Vec::new(); self.nodes.len()];
        for (i, l) in links.iter().enumerate() {
            out_links[l.from].push(i);
        }

        let origins = self.origins.iter().map(|o| lookup_node(o)).collect::<Result<Vec<_>, _>>()?;
        let destinations = self.destinations.iter().map(|d| lookup_node(d)).collect::<Result<Vec<_>, _>>()?;
        if destinations.is_empty() {
            return Err(NetworkError::Format("at least one destination is required".into()));
        }
        let to_destination = DistanceField::towards_raw(self.nodes.len(), &links, &destinations);
        for &o in &origins {
            for &d in &destinations {
                let field = DistanceField::towards_raw(self.nodes.len(), &links, &[d]);
                if !field.dist[o].is_finite() {
                    return Err(NetworkError::NoPath {
                        from: self.nodes[o].id.clone(),
                        to: self.nodes[d].id.clone(),
                    });
                }
            }
        }

        let mut junctions = Vec::with_capacity(self.junctions.len());
        let mut junction_at_node = vec![None; self.nodes.len()];
        for draft in self.junctions {
            let invalid = |reason: String| NetworkError::InvalidJunction {
                id: draft.id.clone(),
                reason,
            };
            if draft.node.is_empty() {
                return Err(invalid("guidance given for an undeclared junction".into()));
            }
            let node = lookup_node(&draft.node)?;
            if draft.alternatives.len() < 2 {
                return Err(invalid("needs at least two alternatives".into()));
            }
            if junction_at_node[node].is_some() {
                return Err(invalid("another junction already sits at this node".into()));
            }
            let mut alternatives = Vec::new();
            for alt in draft.alternatives {
                let first_link = lookup_link(&alt.first_link)?;
                if links[first_link].from != node {
                    return Err(invalid(format!("link {:?} does not leave the junction node", alt.first_link)));
                }
                if alternatives.iter().any(|a: &JunctionAlternative| a.first_link == first_link) {
                    return Err(invalid(format!("link {:?} used by two alternatives", alt.first_link)));
                }
                let beyond = to_destination.dist[links[first_link].to];
                if !beyond.is_finite() {
                    return Err(invalid(format!("alternative {:?} cannot reach a destination", alt.name)));
                }
                let remaining_m = alt.remaining_m.unwrap_or(links[first_link].length + beyond);
                if !(remaining_m.is_finite() && remaining_m >= 0.0) {
                    return Err(invalid(format!("alternative {:?} has an invalid distance", alt.name)));
                }
                alternatives.push(JunctionAlternative {
                    name: alt.name,
                    first_link,
                    remaining_m,
                    attraction: Schedule::new(alt.attraction.into_iter().map(|iv| (iv, ())).collect())?,
                    start_point: alt.start_point,
                });
            }
            if let Some((_, bad)) = draft.guidance.iter().find(|(_, a)| *a >= alternatives.len()) {
                return Err(invalid(format!("guided alternative {bad} out of range")));
            }
            junction_at_node[node] = Some(junctions.len());
            junctions.push(Junction {
                id: draft.id,
                node,
                alternatives,
                guidance: Schedule::new(draft.guidance)?,
            });
        }

        let mut control_points = Vec::new();
        for draft in self.control_points {
            let schedule = Schedule::new(draft.schedule)?;
            match draft.location {
                CpLocation::Link(link, offset) => {
                    let li = lookup_link(&link)?;
                    if !(0.0..=links[li].length).contains(&offset) {
                        return Err(NetworkError::InvalidLink {
                            id: link,
                            reason: format!("control point {:?} offset {offset} outside the link", draft.id),
                        });
                    }
                    control_points.push(ControlPoint {
                        id: draft.id,
                        link: li,
                        offset,
                        schedule,
                    });
                }
                CpLocation::Node(node) => {
                    let ni = lookup_node(&node)?;
                    for (li, l) in links.iter().enumerate().filter(|(_, l)| l.to == ni) {
                        control_points.push(ControlPoint {
                            id: draft.id.clone(),
                            link: li,
                            offset: l.length,
                            schedule: schedule.clone(),
                        });
                    }
                }
            }
        }

        let station = match self.station {
            None => None,
            Some((node, platform_capacity, trains)) => {
                let node = lookup_node(&node)?;
                if !destinations.contains(&node) {
                    return Err(NetworkError::Station("station node must be a destination".into()));
                }
                if trains.iter().any(|t| t.capacity == 0 || !t.departure.is_finite()) {
                    return Err(NetworkError::Station("train capacities must be positive".into()));
                }
                if trains.windows(2).any(|w| w[1].departure <= w[0].departure) {
                    return Err(NetworkError::Station("departures must be strictly increasing".into()));
                }
                Some(Station {
                    node,
                    platform_capacity,
                    trains,
                })
            }
        };

        Ok(Network {
            nodes: self.nodes,
            links,
            junctions,
            control_points,
            station,
            origins,
            destinations,
            out_links,
            node_index,
            link_index,
            junction_at_node,
            to_destination,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Network {
        NetworkBuilder::new()
            .node("a", None)
            .node("b", None)
            .node("c", None)
            .link("ab", "a", "b", 3.0, 1.0)
            .link("bc", "b", "c", 4.0, 1.0)
            .origin("a")
            .destination("c")
            .build()
            .unwrap()
    }

    #[test]
    fn shortest_distance_examples() {
        let net = chain();
        assert_eq!(net.shortest_distance_by_id("a", "a").unwrap(), 0.0);
        assert_eq!(net.shortest_distance_by_id("a", "c").unwrap(), 7.0);
        assert!(matches!(net.shortest_distance_by_id("c", "a"), Err(NetworkError::NoPath { .. })));

        let tri = NetworkBuilder::new()
            .node("s", None)
            .node("m", None)
            .node("t", None)
            .link("direct", "s", "t", 10.0, 1.0)
            .link("sm", "s", "m", 4.0, 1.0)
            .link("mt", "m", "t", 5.0, 1.0)
            .destination("t")
            .build()
            .unwrap();
        assert_eq!(tri.shortest_distance_by_id("s", "t").unwrap(), 9.0);
        assert_eq!(tri.next_link_to_destination(0), tri.link_index("sm"));
    }

    #[test]
    fn validation_errors() {
        let bad_len = NetworkBuilder::new()
            .node("a", None)
            .node("b", None)
            .link("ab", "a", "b", 0.0, 1.0)
            .destination("b")
            .build();
        assert!(matches!(bad_len, Err(NetworkError::InvalidLink { .. })));

        let dangling = NetworkBuilder::new().node("a", None).link("ax", "a", "x", 1.0, 1.0).destination("a").build();
        assert!(matches!(dangling, Err(NetworkError::UnknownNode(_))));

        let disconnected = NetworkBuilder::new()
            .node("a", None)
            .node("b", None)
            .link("ba", "b", "a", 1.0, 1.0)
            .origin("a")
            .destination("b")
            .build();
        assert!(matches!(disconnected, Err(NetworkError::NoPath { .. })));

        let one_alt = NetworkBuilder::new()
            .node("a", None)
            .node("b", None)
            .link("ab", "a", "b", 1.0, 1.0)
            .destination("b")
            .junction("J", "a", vec![AlternativeDraft::new("only", "ab")])
            .build();
        assert!(matches!(one_alt, Err(NetworkError::InvalidJunction { .. })));

        let bad_trains = NetworkBuilder::new()
            .node("a", None)
            .node("b", None)
            .link("ab", "a", "b", 1.0, 1.0)
            .destination("b")
            .station(
                "b",
                None,
                vec![
                    Train {
                        departure: 10.0,
                        capacity: 5,
                    },
                    Train {
                        departure: 10.0,
                        capacity: 5,
                    },
                ],
            )
            .build();
        assert!(matches!(bad_trains, Err(NetworkError::Station(_))));
    }

    fn two_route() -> Network {
        NetworkBuilder::new()
            .node("o", Some([0.0, 0.0]))
            .node("j", Some([100.0, 0.0]))
            .node("m", Some([150.0, 30.0]))
            .node("s", Some([200.0, 0.0]))
            .link("oj", "o", "j", 100.0, 4.0)
            .link("js", "j", "s", 100.0, 4.0)
            .link("jm", "j", "m", 80.0, 4.0)
            .link("ms", "m", "s", 70.0, 4.0)
            .origin("o")
            .destination("s")
            .junction(
                "J1",
                "j",
                vec![
                    AlternativeDraft::new("Route1", "js").attraction(Interval::new(0.0, 7200.0)),
                    AlternativeDraft::new("Route2", "jm"),
                ],
            )
            .guidance("J1", Interval::new(600.0, 1200.0), 1)
            .build()
            .unwrap()
    }

    #[test]
    fn junction_features_follow_schedules() {
        let net = two_route();
        let x = net.junction_features(0, 0.0, 1000.0);
        assert_eq!(x.row(0), &[0.1, 0.0, 1.0]);
        assert_eq!(x.row(1), &[0.15, 0.0, 0.0]);
        let guided = net.junction_features(0, 600.0, 1000.0);
        assert_eq!(guided.get(1, 1), 1.0);
        assert_eq!(guided.get(0, 1), 0.0);
        // stalls closed
        let late = net.junction_features(0, 7200.0, 1000.0);
        assert!(late.rows().all(|r| r[2] == 0.0 && r[1] == 0.0));
    }

    #[test]
    fn junction_distance_matches_graph_search() {
        let net = two_route();
        let j = &net.junctions()[0];
        for alt in &j.alternatives {
            let link = &net.links()[alt.first_link];
            let oracle = link.length + net.shortest_distance(link.to, net.destinations()[0]).unwrap();
            assert_eq!(alt.remaining_m, oracle);
        }
        assert_eq!(j.shortest_alternative(), 0);
    }

    #[test]
    fn node_control_point_expands_to_incoming_links() {
        let net = NetworkBuilder::new()
            .node("a", None)
            .node("b", None)
            .node("c", None)
            .link("ac", "a", "c", 5.0, 1.0)
            .link("bc", "b", "c", 7.0, 1.0)
            .destination("c")
            .control_point_at_node("cp", "c", vec![(Interval::new(0.0, 10.0), ControlMode::Stop)])
            .build()
            .unwrap();
        let cps = net.control_points();
        assert_eq!(cps.len(), 2);
        assert_eq!((cps[0].offset, cps[1].offset), (5.0, 7.0));
        assert_eq!(cps[0].mode(5.0), ControlMode::Stop);
        assert_eq!(cps[0].mode(10.0), ControlMode::Proceed);
    }

    #[test]
    fn embedding_helpers() {
        let net = two_route();
        assert_eq!(net.position_on_link(0, 50.0), Some([50.0, 0.0]));
        assert_eq!(net.link_heading(0), Some([1.0, 0.0]));
    }
}
