//! Global cost-weighted grid search and a carrot-following local controller.

mod astar;
mod follow;

pub use astar::{edge_cost, path_blocked, plan_global};
pub use follow::{closest_point, local_follow};

use serde::{Deserialize, Serialize};

use crate::costmap::Cell;
use crate::math::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanTrigger {
    /// A human's footprint was escalated to lethal.
    Escalation,
    /// A remaining path cell became impassable.
    Blocked,
    /// No path was found; retry periodically.
    Retry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Distance-equivalent weight of cell cost.
    pub cost_weight: f64,
    pub goal_tolerance: f64,
    /// Carrot distance ahead of the closest path point, meters.
    pub lookahead: f64,
    /// Heading gain of the local controller, 1/s.
    pub heading_gain: f64,
    pub replan_on: Vec<ReplanTrigger>,
    /// Seconds between retries after a failed plan.
    pub retry_interval: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            cost_weight: 25.0,
            goal_tolerance: 0.15,
            lookahead: 0.6,
            heading_gain: 2.0,
            replan_on: vec![ReplanTrigger::Escalation, ReplanTrigger::Blocked, ReplanTrigger::Retry],
            retry_interval: 1.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cost_weight >= 0.0 && self.cost_weight.is_finite()) {
            return Err(format!("cost_weight must be >= 0, got {}", self.cost_weight));
        }
        for (name, v) in [
            ("goal_tolerance", self.goal_tolerance),
            ("lookahead", self.lookahead),
            ("heading_gain", self.heading_gain),
            ("retry_interval", self.retry_interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn replans_on(&self, t: ReplanTrigger) -> bool {
        self.replan_on.contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub cells: Vec<Cell>,
    /// Cell centers, except the last which is the exact goal point.
    pub waypoints: Vec<Vec2>,
    pub total_cost: f64,
}

impl Path {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn goal(&self) -> Option<Vec2> {
        self.waypoints.last().copied()
    }

    /// Polyline length of the waypoints.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no traversable path")]
    NoPath,
    #[error("start cell is inside an impassable region")]
    StartBlocked,
    #[error("{0} point is outside the grid")]
    OutOfBounds(&'static str),
}
