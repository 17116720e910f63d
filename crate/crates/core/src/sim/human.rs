//! Scripted pedestrian policies.

use serde::{Deserialize, Serialize};

use super::types::Pose;
use crate::math::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    Static,
    /// Stands still and never yields, touched or not.
    BlockPersist,
    /// After a touch, waits `delay` seconds then steps `retreat` meters
    /// sideways at `speed`.
    YieldAfterTouch {
        delay: f64,
        retreat: f64,
        #[serde(default = "default_yield_speed")]
        speed: f64,
    },
    /// Walks the points in order at constant speed; restarts at the first
    /// point when `cyclic`.
    Waypoint {
        path: Vec<Vec2>,
        speed: f64,
        #[serde(default)]
        cyclic: bool,
    },
    /// Velocity is set from outside.
    Teleop,
}

fn default_yield_speed() -> f64 {
    0.5
}

impl PolicyKind {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            PolicyKind::YieldAfterTouch { delay, retreat, speed } => {
                if !(*delay >= 0.0) {
                    return Err(format!("delay must be >= 0, got {delay}"));
                }
                if !(*retreat > 0.0) {
                    return Err(format!("retreat must be > 0, got {retreat}"));
                }
                if !(*speed > 0.0) {
                    return Err(format!("speed must be > 0, got {speed}"));
                }
            }
            PolicyKind::Waypoint { path, speed, .. } => {
                if !(*speed > 0.0) {
                    return Err(format!("speed must be > 0, got {speed}"));
                }
                if path.is_empty() {
                    return Err("waypoint path is empty".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Static => "static",
            PolicyKind::BlockPersist => "block_persist",
            PolicyKind::YieldAfterTouch { .. } => "yield_after_touch",
            PolicyKind::Waypoint { .. } => "waypoint",
            PolicyKind::Teleop => "teleop",
        }
    }
}

/// Runtime data carried by a policy between steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyState {
    /// Tick of the first touch.
    pub touched_at: Option<u64>,
    pub retreat_origin: Vec2,
    pub retreat_dir: Vec2,
    pub retreated: f64,
    pub next_waypoint: usize,
    pub teleop_velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanAgent {
    pub id: u32,
    pub pose: Pose,
    pub radius: f64,
    pub class: String,
    pub policy: PolicyKind,
    pub state: PolicyState,
    /// World-frame velocity over the last step.
    pub velocity: Vec2,
}

impl HumanAgent {
    pub fn new(id: u32, pose: Pose, radius: f64, class: impl Into<String>, policy: PolicyKind) -> Self {
        Self { id, pose, radius, class: class.into(), policy, state: PolicyState::default(), velocity: Vec2::ZERO }
    }

    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }

    /// Hands the human over to an external operator.
    pub fn set_teleop(&mut self, velocity: Vec2) {
        self.policy = PolicyKind::Teleop;
        self.state.teleop_velocity = velocity;
    }
}

/// Advances one human by its policy for the step at `tick`.
pub fn policy_step(human: &HumanAgent, robot: &Pose, touched: bool, tick: u64, dt: f64, max_speed: f64) -> HumanAgent {
    let mut h = human.clone();
    let before = h.position();
    match &human.policy {
        PolicyKind::Static | PolicyKind::BlockPersist => {}
        PolicyKind::YieldAfterTouch { delay, retreat, speed } => {
            if touched && h.state.touched_at.is_none() {
                h.state.touched_at = Some(tick);
                h.state.retreat_origin = before;
                h.state.retreat_dir = sidestep_direction(robot, before);
            }
            if let Some(t0) = h.state.touched_at {
                let wait_ticks = (delay / dt - 1e-9).ceil().max(0.0) as u64;
                if tick >= t0 + wait_ticks && h.state.retreated < *retreat {
                    h.state.retreated = (h.state.retreated + speed * dt).min(*retreat);
                    let p = h.state.retreat_origin + h.state.retreat_dir * h.state.retreated;
                    h.pose.x = p.x;
                    h.pose.y = p.y;
                }
            }
        }
        PolicyKind::Waypoint { path, speed, cyclic } => {
            if h.state.next_waypoint < path.len() {
                let target = path[h.state.next_waypoint];
                let to = target - before;
                let stride = speed * dt;
                let p = if to.norm() <= stride {
                    h.state.next_waypoint += 1;
                    if *cyclic && h.state.next_waypoint == path.len() {
                        h.state.next_waypoint = 0;
                    }
                    target
                } else {
                    before + to * (stride / to.norm())
                };
                h.pose.x = p.x;
                h.pose.y = p.y;
            }
        }
        PolicyKind::Teleop => {
            let v = h.state.teleop_velocity.clamp_norm(max_speed);
            let p = before + v * dt;
            h.pose.x = p.x;
            h.pose.y = p.y;
        }
    }
    let moved = h.position() - before;
    h.velocity = moved * (1.0 / dt);
    if moved.norm() > 1e-12 {
        h.pose.theta = moved.angle();
    }
    h
}

/// Unit vector perpendicular to the robot→human line, on the side of the
/// robot's heading where the human already stands (left on ties).
fn sidestep_direction(robot: &Pose, human: Vec2) -> Vec2 {
    let u = (human - robot.position()).normalized().unwrap_or_else(|| robot.heading());
    let side = robot.heading().cross(u);
    if side >= 0.0 {
        u.perp()
    } else {
        -u.perp()
    }
}
