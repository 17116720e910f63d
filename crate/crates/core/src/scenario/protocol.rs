//! Live-control protocol messages and run-length-encoded costmap rows.
//!
//! Every message is one JSON text frame with a `type` tag and a `seq`
//! number. Client sequence numbers must increase strictly; server sequence
//! numbers increase by one per message sent on a connection.

use serde::{Deserialize, Serialize};

use crate::behavior::{EscalationRecord, FsmState};
use crate::costmap::CostLayer;
use crate::math::Vec2;
use crate::proximity::FilterPhase;

use super::session::Outcome;

fn default_touch_force() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Hands human `human` to the operator with world-frame velocity (vx, vy).
    Teleop { seq: u64, human: u32, vx: f64, vy: f64 },
    /// Injects a touch on the robot at body azimuth `azimuth` for one tick.
    Touch {
        seq: u64,
        azimuth: f64,
        #[serde(default = "default_touch_force")]
        force: f64,
    },
    Pause { seq: u64 },
    Resume { seq: u64 },
    /// Advances exactly one tick; only accepted while paused.
    Step { seq: u64 },
    /// Restarts the current scenario.
    Reset { seq: u64 },
    /// Replaces the scenario: either a full document or a bundled name.
    Load { seq: u64, scenario: serde_json::Value },
}

impl ClientMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ClientMessage::Teleop { seq, .. }
            | ClientMessage::Touch { seq, .. }
            | ClientMessage::Pause { seq }
            | ClientMessage::Resume { seq }
            | ClientMessage::Step { seq }
            | ClientMessage::Reset { seq }
            | ClientMessage::Load { seq, .. } => *seq,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Teleop { .. } => "teleop",
            ClientMessage::Touch { .. } => "touch",
            ClientMessage::Pause { .. } => "pause",
            ClientMessage::Resume { .. } => "resume",
            ClientMessage::Step { .. } => "step",
            ClientMessage::Reset { .. } => "reset",
            ClientMessage::Load { .. } => "load",
        }
    }
}

/// One row of a costmap as (value, run length) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleRow {
    pub row: usize,
    pub runs: Vec<(u8, u32)>,
}

pub fn rle_encode(row: &[u8]) -> Vec<(u8, u32)> {
    let mut runs: Vec<(u8, u32)> = Vec::new();
    for &v in row {
        match runs.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => runs.push((v, 1)),
        }
    }
    runs
}

pub fn rle_decode(runs: &[(u8, u32)]) -> Vec<u8> {
    runs.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n as usize)).collect()
}

/// Rows of `current` that differ from `previous` (all rows when there is no
/// previous frame or its size differs).
pub fn diff_rows(previous: Option<&[u8]>, current: &CostLayer) -> Vec<RleRow> {
    let spec = current.spec();
    let prev = previous.filter(|p| p.len() == spec.len());
    (0..spec.height)
        .filter(|&y| prev.is_none_or(|p| &p[y * spec.width..(y + 1) * spec.width] != current.row(y)))
        .map(|y| RleRow { row: y, runs: rle_encode(current.row(y)) })
        .collect()
}

/// Applies row updates to a row-major buffer of the given width.
pub fn apply_rows(buffer: &mut [u8], width: usize, rows: &[RleRow]) -> Result<(), String> {
    for r in rows {
        let cells = rle_decode(&r.runs);
        if cells.len() != width {
            return Err(format!("row {} decodes to {} cells, expected {width}", r.row, cells.len()));
        }
        let start = r.row * width;
        let dst = buffer.get_mut(start..start + width).ok_or_else(|| format!("row {} out of range", r.row))?;
        dst.copy_from_slice(&cells);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub radius: f64,
    pub plates: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanView {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub radius: f64,
    pub class: String,
    pub policy: String,
    pub detected: bool,
}

/// Simulation state shown to clients, without the costmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub scenario: String,
    pub tick: u64,
    pub paused: bool,
    pub robot: RobotView,
    pub humans: Vec<HumanView>,
    pub fsm: FsmState,
    pub filter: FilterPhase,
    pub path: Vec<Vec2>,
    pub escalations: Vec<EscalationRecord>,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostmapUpdate {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Vec2,
    /// True when `rows` holds every row rather than only changed ones.
    pub full: bool,
    pub rows: Vec<RleRow>,
}

impl CostmapUpdate {
    pub fn new(previous: Option<&[u8]>, current: &CostLayer) -> Self {
        let spec = current.spec();
        let full = previous.is_none_or(|p| p.len() != spec.len());
        Self {
            width: spec.width,
            height: spec.height,
            resolution: spec.resolution,
            origin: spec.origin,
            full,
            rows: diff_rows(previous, current),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    #[serde(flatten)]
    pub view: SessionView,
    pub costmap: CostmapUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    /// Acknowledges client message `ack`.
    Ack { seq: u64, ack: u64 },
    Error {
        seq: u64,
        #[serde(default)]
        ack: Option<u64>,
        message: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::{Cell, GridSpec};
    use proptest::prelude::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"teleop","seq":4,"human":1,"vx":0.5,"vy":0}"#).unwrap();
        assert_eq!(m, ClientMessage::Teleop { seq: 4, human: 1, vx: 0.5, vy: 0.0 });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"touch","seq":5,"azimuth":3.14}"#).unwrap();
        assert_eq!(m, ClientMessage::Touch { seq: 5, azimuth: 3.14, force: 6.0 });
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"step"}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"fly","seq":1}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"pause","seq":1,"extra":2}"#).is_err());
    }

    #[test]
    fn rle_examples() {
        assert_eq!(rle_encode(&[0, 0, 255, 255, 255, 3]), vec![(0, 2), (255, 3), (3, 1)]);
        assert!(rle_encode(&[]).is_empty());
        let json = serde_json::to_string(&RleRow { row: 2, runs: vec![(0, 4)] }).unwrap();
        assert_eq!(json, r#"{"row":2,"runs":[[0,4]]}"#);
    }

    #[test]
    fn single_cell_change_sends_one_row() {
        let spec = GridSpec::new(5, 4, 0.1, Vec2::ZERO).unwrap();
        let a = CostLayer::new(spec);
        let mut b = a.clone();
        b.set(Cell::new(3, 2), 200);
        let rows = diff_rows(Some(a.as_slice()), &b);
        assert_eq!(rows, vec![RleRow { row: 2, runs: vec![(0, 3), (200, 1), (0, 1)] }]);
        assert_eq!(diff_rows(None, &b).len(), 4);
        let mut buf = a.as_slice().to_vec();
        apply_rows(&mut buf, 5, &rows).unwrap();
        assert_eq!(buf, b.as_slice());
    }

    proptest! {
        #[test]
        fn rle_roundtrip(row in proptest::collection::vec(prop_oneof![Just(0u8), Just(255u8), any::<u8>()], 0..200)) {
            prop_assert_eq!(rle_decode(&rle_encode(&row)), row);
        }
    }
}
