//! Discrete-time crowd simulation: scenarios, the tick loop, event logs,
//! seeded replication and a log auditor.

mod audit;
mod log;
mod replicate;
mod scenario;
mod sim;

pub use audit::{audit_log, AuditReport};
pub use log::{read_summaries, write_summaries, AgentSummary, Event, EventKind, EventLog};
pub use replicate::{replicate, replicate_map, replication_seed};
pub use scenario::{
    scale_schedule, AgentSpec, Departure, Mode, Policy, PolicyName, Scenario, ScenarioFile, ScheduleSpec,
    ScriptedAgent, ScriptedSpec,
};
pub use sim::{run, run_with, AgentState, KinematicAudit, RunOptions, RunOutput, RunStats, DT, EVAC_DECISION_INTERVAL_S};

use crate::dcm::DcmError;
use crate::network::NetworkError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dcm(#[from] DcmError),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl From<csv::Error> for EngineError {
    fn from(e: csv::Error) -> Self {
        EngineError::Format(e.to_string())
    }
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Io(e.to_string())
    }
}
