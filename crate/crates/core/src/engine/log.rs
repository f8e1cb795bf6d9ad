use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EngineError;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Spawn,
    Decide {
        junction: u16,
        alternative: u16,
        probabilities: Box<[f64]>,
    },
    Hold,
    Release,
    ArriveStation,
    Board {
        train: u32,
    },
    /// Reached a destination without a station.
    Exit,
    /// The time cap was hit; carries no agent.
    Truncated,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Spawn => "SPAWN",
            EventKind::Decide { .. } => "DECIDE",
            EventKind::Hold => "HOLD",
            EventKind::Release => "RELEASE",
            EventKind::ArriveStation => "ARRIVE_STATION",
            EventKind::Board { .. } => "BOARD",
            EventKind::Exit => "EXIT",
            EventKind::Truncated => "TRUNCATED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Time in ticks of [`super::DT`].
    pub tick: u32,
    pub agent: u32,
    pub scripted: bool,
    pub kind: EventKind,
}

impl Event {
    pub fn time(&self) -> f64 {
        self.tick as f64 * super::DT
    }
}

/// Append-only record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    /// Junction ids referenced by `DECIDE` events.
    pub junctions: Vec<String>,
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t: String,
    agent: String,
    event: String,
    junction: String,
    alternative: String,
    probabilities: String,
    train: String,
    scripted: u8,
}

fn format_tick(tick: u32) -> String {
    format!("{}.{}", tick / 10, tick % 10)
}

fn parse_tick(text: &str) -> Result<u32, EngineError> {
    let t: f64 = text.parse().map_err(|_| EngineError::Format(format!("bad time {text:?}")))?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(EngineError::Format(format!("bad time {text:?}")));
    }
    Ok((t / super::DT).round() as u32)
}

impl EventLog {
    pub fn push(&mut self, tick: u32, agent: u32, scripted: bool, kind: EventKind) {
        self.events.push(Event {
            tick,
            agent,
            scripted,
            kind,
        });
    }

    pub fn is_truncated(&self) -> bool {
        self.events.last().is_some_and(|e| e.kind == EventKind::Truncated)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.events {
            let mut row = Row {
                t: format_tick(e.tick),
                agent: e.agent.to_string(),
                event: e.kind.label().into(),
                junction: String::new(),
                alternative: String::new(),
                probabilities: String::new(),
                train: String::new(),
                scripted: u8::from(e.scripted),
            };
            match &e.kind {
                EventKind::Decide {
                    junction,
                    alternative,
                    probabilities,
                } => {
                    row.junction = self.junctions[*junction as usize].clone();
                    row.alternative = alternative.to_string();
                    row.probabilities = probabilities.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";");
                }
                EventKind::Board { train } => row.train = train.to_string(),
                EventKind::Truncated => row.agent.clear(),
                _ => {}
            }
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory cannot fail");
        out
    }

    /// SHA-256 of the CSV rendering, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_bytes()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<EventLog, EngineError> {
        let mut log = EventLog::default();
        let mut r = csv::Reader::from_reader(reader);
        for (i, row) in r.deserialize::<Row>().enumerate() {
            let row = row?;
            let line = i + 2;
            let bad = |what: &str| EngineError::Format(format!("line {line}: {what}"));
            let tick = parse_tick(&row.t)?;
            let agent = if row.event == "TRUNCATED" {
                0
            } else {
                row.agent.parse().map_err(|_| bad("bad agent id"))?
            };
            let kind = match row.event.as_str() {
                "SPAWN" => EventKind::Spawn,
                "HOLD" => EventKind::Hold,
                "RELEASE" => EventKind::Release,
                "ARRIVE_STATION" => EventKind::ArriveStation,
                "EXIT" => EventKind::Exit,
                "TRUNCATED" => EventKind::Truncated,
                "BOARD" => EventKind::Board {
                    train: row.train.parse().map_err(|_| bad("bad train index"))?,
                },
                "DECIDE" => {
                    let junction = match log.junctions.iter().position(|j| *j == row.junction) {
                        Some(p) => p,
                        None => {
                            log.junctions.push(row.junction.clone());
                            log.junctions.len() - 1
                        }
                    };
                    let probabilities = row
                        .probabilities
                        .split(';')
                        .map(|p| p.parse::<f64>().map_err(|_| bad("bad probability")))
                        .collect::<Result<Vec<_>, _>>()?;
                    EventKind::Decide {
                        junction: junction as u16,
                        alternative: row.alternative.parse().map_err(|_| bad("bad alternative"))?,
                        probabilities: probabilities.into_boxed_slice(),
                    }
                }
                other => return Err(bad(&format!("unknown event {other:?}"))),
            };
            log.push(tick, agent, row.scripted != 0, kind);
        }
        Ok(log)
    }

    pub fn load(path: &std::path::Path) -> Result<EventLog, EngineError> {
        let f = std::fs::File::open(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// One agent's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: u32,
    pub scripted: bool,
    pub departure: f64,
    /// Link ids walked, separated by `>`.
    pub route: String,
    /// Station arrival or exit time.
    pub arrival: Option<f64>,
    pub train: Option<u32>,
    pub state: super::AgentState,
}

pub fn write_summaries<W: Write>(writer: W, rows: &[AgentSummary]) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries<R: Read>(reader: R) -> Result<Vec<AgentSummary>, EngineError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(EngineError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventLog {
        let mut log = EventLog {
            junctions: vec!["J1".into(), "J2".into()],
            events: Vec::new(),
        };
        log.push(0, 3, false, EventKind::Spawn);
        log.push(
            1,
            3,
            false,
            EventKind::Decide {
                junction: 1,
                alternative: 0,
                probabilities: vec![0.1 + 0.2, 0.7].into(),
            },
        );
        log.push(12, 3, false, EventKind::Hold);
        log.push(13, 3, false, EventKind::Release);
        log.push(2047, 3, true, EventKind::ArriveStation);
        log.push(2050, 3, true, EventKind::Board { train: 4 });
        log.push(2051, 0, false, EventKind::Truncated);
        log
    }

    #[test]
    fn times_use_one_decimal() {
        let text = String::from_utf8(sample().to_csv_bytes()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,agent,event,junction,alternative,probabilities,train,scripted");
        assert!(lines[2].starts_with("0.1,3,DECIDE,J2,0,0.30000000000000004;0.7,,0"));
        assert!(lines[5].starts_with("204.7,3,ARRIVE_STATION"));
        assert_eq!(lines[7], "205.1,,TRUNCATED,,,,,0");
    }

    #[test]
    fn csv_round_trip() {
        let log = sample();
        let back = EventLog::read_csv(log.to_csv_bytes().as_slice()).unwrap();
        // junction table is rebuilt in order of first use
        assert_eq!(back.junctions, vec!["J2"]);
        assert_eq!(back.events.len(), log.events.len());
        assert_eq!(back.to_csv_bytes(), log.to_csv_bytes());
        assert!(back.is_truncated());
    }

    #[test]
    fn digest_tracks_content() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.digest(), b.digest());
        b.events[0].tick = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn summaries_round_trip() {
        let rows = vec![AgentSummary {
            id: 1,
            scripted: false,
            departure: 12.5,
            route: "a>b".into(),
            arrival: None,
            train: Some(2),
            state: super::super::AgentState::Waiting,
        }];
        let mut buf = Vec::new();
        write_summaries(&mut buf, &rows).unwrap();
        assert_eq!(read_summaries(buf.as_slice()).unwrap(), rows);
    }
}
