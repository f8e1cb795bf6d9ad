use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AlternativeDraft, ControlMode, Interval, Network, NetworkBuilder, NetworkError, Train};

/// Seconds from scenario start, or an `HH:MM[:SS]` clock string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeValue {
    Seconds(f64),
    Clock(String),
}

impl TimeValue {
    pub fn resolve(&self, origin: f64) -> Result<f64, NetworkError> {
        match self {
            TimeValue::Seconds(s) if s.is_finite() => Ok(*s),
            TimeValue::Seconds(s) => Err(NetworkError::Format(format!("time {s} is not finite"))),
            TimeValue::Clock(text) => {
                let clock = parse_clock(text)?;
                let mut t = clock - origin;
                // clock times before the origin belong to the next day
                if t < 0.0 {
                    t += 86_400.0;
                }
                Ok(t)
            }
        }
    }
}

/// Seconds since midnight of an `HH:MM` or `HH:MM:SS` string.
pub fn parse_clock(text: &str) -> Result<f64, NetworkError> {
    let bad = || NetworkError::Format(format!("invalid clock time {text:?}, expected HH:MM or HH:MM:SS"));
    let parts: Vec<&str> = text.trim().split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let h: u32 = parts[0].parse().map_err(|_| bad())?;
    let m: u32 = parts[1].parse().map_err(|_| bad())?;
    let s: f64 = match parts.get(2) {
        Some(p) => p.parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if h > 47 || m > 59 || !(0.0..60.0).contains(&s) {
        return Err(bad());
    }
    Ok(f64::from(h) * 3600.0 + f64::from(m) * 60.0 + s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    /// Clock time of scenario second 0; clock strings are relative to it.
    #[serde(default)]
    pub clock_origin: Option<String>,
    #[serde(default)]
    pub origins: Vec<String>,
    pub destinations: Vec<String>,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub junctions: Vec<JunctionSpec>,
    #[serde(default)]
    pub guidance: Vec<GuidanceSpec>,
    #[serde(default)]
    pub control_points: Vec<ControlPointSpec>,
    #[serde(default)]
    pub station: Option<StationSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default)]
    pub xy: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub start: TimeValue,
    pub end: TimeValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeSpec {
    pub name: String,
    pub first_link: String,
    #[serde(default)]
    pub remaining_m: Option<f64>,
    #[serde(default)]
    pub start_point: Option<[f64; 2]>,
    #[serde(default)]
    pub attraction: Vec<IntervalSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSpec {
    pub id: String,
    pub node: String,
    pub alternatives: Vec<AlternativeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSpec {
    pub junction: String,
    pub start: TimeValue,
    pub end: TimeValue,
    pub alternative: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub start: TimeValue,
    pub end: TimeValue,
    pub mode: ControlMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPointSpec {
    pub id: String,
    #[serde(default)]
    pub link: Option<String>,
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub node: Option<String>,
    #[serde(default)]
    pub schedule: Vec<ModeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub departure: TimeValue,
    pub capacity: usize,
}

/// Regular service: a train every `headway_s` from `first` through `last`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub first: TimeValue,
    pub last: TimeValue,
    pub headway_s: f64,
    pub capacity: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub node: String,
    #[serde(default)]
    pub platform_capacity: Option<usize>,
    #[serde(default)]
    pub trains: Vec<TrainSpec>,
    #[serde(default)]
    pub service: Vec<ServiceSpec>,
}

impl NetworkFile {
    pub fn clock_origin_seconds(&self) -> Result<f64, NetworkError> {
        self.clock_origin.as_deref().map_or(Ok(0.0), parse_clock)
    }

    pub fn build(&self) -> Result<Network, NetworkError> {
        let origin = self.clock_origin_seconds()?;
        let interval = |iv: &IntervalSpec| -> Result<Interval, NetworkError> {
            Ok(Interval::new(iv.start.resolve(origin)?, iv.end.resolve(origin)?))
        };

        let mut b = NetworkBuilder::new();
        for n in &self.nodes {
            b = b.node(&n.id, n.xy);
        }
        for l in &self.links {
            b = b.link(&l.id, &l.from, &l.to, l.length, l.width);
        }
        for o in &self.origins {
            b = b.origin(o);
        }
        for d in &self.destinations {
            b = b.destination(d);
        }
        for j in &self.junctions {
            let mut alts = Vec::new();
            for a in &j.alternatives {
                let mut draft = AlternativeDraft::new(&a.name, &a.first_link);
                draft.remaining_m = a.remaining_m;
                draft.start_point = a.start_point;
                for iv in &a.attraction {
                    draft = draft.attraction(interval(iv)?);
                }
                alts.push(draft);
            }
            b = b.junction(&j.id, &j.node, alts);
        }
        for g in &self.guidance {
            let iv = Interval::new(g.start.resolve(origin)?, g.end.resolve(origin)?);
            b = b.guidance(&g.junction, iv, g.alternative);
        }
        for cp in &self.control_points {
            let schedule = cp
                .schedule
                .iter()
                .map(|m| Ok((Interval::new(m.start.resolve(origin)?, m.end.resolve(origin)?), m.mode)))
                .collect::<Result<Vec<_>, NetworkError>>()?;
            b = match (&cp.link, &cp.node) {
                (Some(link), None) => b.control_point_on_link(&cp.id, link, cp.offset.unwrap_or(0.0), schedule),
                (None, Some(node)) => b.control_point_at_node(&cp.id, node, schedule),
                _ => {
                    return Err(NetworkError::Format(format!(
                        "control point {:?} needs exactly one of `link` or `node`",
                        cp.id
                    )))
                }
            };
        }
        if let Some(st) = &self.station {
            let mut trains = st
                .trains
                .iter()
                .map(|t| {
                    Ok(Train {
                        departure: t.departure.resolve(origin)?,
                        capacity: t.capacity,
                    })
                })
                .collect::<Result<Vec<_>, NetworkError>>()?;
            for s in &st.service {
                if !(s.headway_s > 0.0) {
                    return Err(NetworkError::Station("service headway must be positive".into()));
                }
                let (first, last) = (s.first.resolve(origin)?, s.last.resolve(origin)?);
                let mut t = first;
                while t <= last + 1e-9 {
                    trains.push(Train {
                        departure: t,
                        capacity: s.capacity,
                    });
                    t += s.headway_s;
                }
            }
            trains.sort_by(|a, b| a.departure.total_cmp(&b.departure));
            b = b.station(&st.node, st.platform_capacity, trains);
        }
        b.build()
    }
}

impl Network {
    pub fn from_toml(text: &str) -> Result<Network, NetworkError> {
        let file: NetworkFile = toml::from_str(text).map_err(|e| NetworkError::Format(e.to_string()))?;
        file.build()
    }

    pub fn load(path: &Path) -> Result<Network, NetworkError> {
        let text = std::fs::read_to_string(path).map_err(|e| NetworkError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
clock_origin = "20:00"
origins = ["site"]
destinations = ["st"]

[[nodes]]
id = "site"
xy = [0.0, 0.0]
[[nodes]]
id = "j1"
[[nodes]]
id = "st"

[[links]]
id = "a"
from = "site"
to = "j1"
length = 100.0
width = 5.0
[[links]]
id = "b"
from = "j1"
to = "st"
length = 200.0
width = 5.0
[[links]]
id = "c"
from = "j1"
to = "st"
length = 300.0
width = 5.0

[[junctions]]
id = "J1"
node = "j1"
[[junctions.alternatives]]
name = "Route1"
first_link = "b"
attraction = [{ start = "20:00", end = "22:00" }]
[[junctions.alternatives]]
name = "Route2"
first_link = "c"
remaining_m = 350.0

[[guidance]]
junction = "J1"
start = 600
end = "20:20"
alternative = 1

[[control_points]]
id = "cp"
link = "a"
offset = 50.0
schedule = [{ start = "20:05", end = "20:06", mode = "STOP" }]

[station]
node = "st"
trains = [{ departure = "00:10", capacity = 100 }]
service = [{ first = "20:10", last = "20:30", headway_s = 600, capacity = 50 }]
"#;

    #[test]
    fn parses_sample_network() {
        let net = Network::from_toml(SAMPLE).unwrap();
        assert_eq!(net.links().len(), 3);
        let j = &net.junctions()[0];
        assert_eq!(j.alternatives[0].remaining_m, 200.0);
        assert_eq!(j.alternatives[1].remaining_m, 350.0);
        assert_eq!(j.guided_alternative(600.0), Some(1));
        assert_eq!(j.guided_alternative(1200.0), None);
        assert!(j.alternatives[0].attraction.at(7199.0).is_some());
        assert!(j.alternatives[0].attraction.at(7200.0).is_none());
        assert_eq!(net.control_points()[0].mode(300.0), ControlMode::Stop);
        let st = net.station().unwrap();
        let departures: Vec<f64> = st.trains.iter().map(|t| t.departure).collect();
        // 00:10 is past midnight, after the 20:00 origin
        assert_eq!(departures, vec![600.0, 1200.0, 1800.0, 15_000.0]);
    }

    #[test]
    fn clock_parsing() {
        assert_eq!(parse_clock("20:40").unwrap(), 74_400.0);
        assert_eq!(parse_clock("00:00:30").unwrap(), 30.0);
        assert!(parse_clock("7").is_err());
        assert!(parse_clock("10:75").is_err());
        assert_eq!(TimeValue::Clock("22:00".into()).resolve(72_000.0).unwrap(), 7200.0);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = SAMPLE.replace("width = 5.0\n[[links]]\nid = \"b\"", "width = 5.0\ncolour = 1\n[[links]]\nid = \"b\"");
        assert!(Network::from_toml(&text).is_err());
    }
}
