//! Headless re-execution of an event log.

use serde::Deserialize;

use super::protocol::ClientMessage;
use super::schema::{load_scenario_value, ScenarioError};
use super::session::{RunReport, Session};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("log does not start with a header record")]
    MissingHeader,
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("line {line}: control message rejected: {message}")]
    Control { line: usize, message: String },
}

#[derive(Deserialize)]
struct AnyRecord {
    #[allow(dead_code)]
    tick: u64,
    kind: String,
    payload: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Replay {
    /// Log regenerated by the replay.
    pub log: Vec<String>,
    /// Report of the last finished run, if any.
    pub report: Option<RunReport>,
    /// First line (0-based) where the regenerated log differs, if any.
    pub first_difference: Option<usize>,
}

impl Replay {
    pub fn identical(&self) -> bool {
        self.first_difference.is_none()
    }
}

/// FSM transitions in a log as `from -> to (trigger)` lines.
pub fn fsm_trace<S: AsRef<str>>(lines: &[S]) -> Vec<String> {
    lines
        .iter()
        .filter_map(|l| serde_json::from_str::<AnyRecord>(l.as_ref()).ok())
        .filter(|r| r.kind == "fsm")
        .map(|r| {
            let field = |k: &str| r.payload.get(k).and_then(|v| v.as_str()).unwrap_or("?").to_string();
            format!("{} -> {} ({})", field("from"), field("to"), field("trigger"))
        })
        .collect()
}

/// Rebuilds the session from the header, re-applies recorded control
/// messages and re-executes one tick per tick record, then compares the
/// regenerated log with the input.
pub fn replay_log(text: &str) -> Result<Replay, ReplayError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut session: Option<Session> = None;
    for (i, line) in lines.iter().enumerate() {
        let rec: AnyRecord =
            serde_json::from_str(line).map_err(|e| ReplayError::Malformed { line: i + 1, message: e.to_string() })?;
        match (rec.kind.as_str(), session.as_mut()) {
            ("header", None) => {
                let doc = rec
                    .payload
                    .get("scenario")
                    .cloned()
                    .ok_or_else(|| ReplayError::Malformed { line: i + 1, message: "header without scenario".into() })?;
                session = Some(Session::new(load_scenario_value(doc)?)?);
            }
            (_, None) => return Err(ReplayError::MissingHeader),
            ("control", Some(s)) => {
                let msg: ClientMessage = serde_json::from_value(rec.payload)
                    .map_err(|e| ReplayError::Malformed { line: i + 1, message: e.to_string() })?;
                s.apply_control(&msg).map_err(|e| ReplayError::Control { line: i + 1, message: e.to_string() })?;
            }
            ("tick", Some(s)) => {
                s.tick();
            }
            ("rejected", Some(s)) => {
                let text = |k: &str| rec.payload.get(k).and_then(|v| v.as_str());
                let (Some(message), Some(error)) = (text("message"), text("error")) else {
                    return Err(ReplayError::Malformed { line: i + 1, message: "rejected record without message".into() });
                };
                s.record_rejected(message, error);
            }
            _ => {}
        }
    }
    let session = session.ok_or(ReplayError::MissingHeader)?;
    let log = session.log().to_vec();
    let first_difference = (0..lines.len().max(log.len())).find(|&i| lines.get(i).copied() != log.get(i).map(String::as_str));
    Ok(Replay { report: session.report().cloned(), log, first_difference })
}
