//! Scenario files, the closed-loop runner, its event log and the live
//! control protocol.
//!
//! The event log is line-delimited JSON. Every line is
//! `{"tick": N, "kind": K, "payload": P}`; see the repository README for the
//! payload of each kind.

mod bundled;
pub mod protocol;
mod replay;
mod schema;
mod session;

pub use bundled::{bundled_names, bundled_scenario, bundled_source};
pub use replay::{fsm_trace, replay_log, Replay, ReplayError};
pub use schema::{
    load_scenario, load_scenario_file, load_scenario_from, load_scenario_value, GoalDoc, GridDoc, HumanDoc, Region, RobotDoc,
    Scenario, ScenarioDoc, ScenarioError, StackConfig,
};
pub use session::{ControlError, Layers, Outcome, RunReport, Session, STUCK_DISTANCE, STUCK_TICKS};

/// Loads a scenario given either a bundled name or a file path.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    let path = std::path::Path::new(name_or_path);
    if path.exists() {
        return load_scenario_file(path);
    }
    bundled_scenario(name_or_path).unwrap_or_else(|| Err(ScenarioError::Unknown(name_or_path.to_string())))
}
