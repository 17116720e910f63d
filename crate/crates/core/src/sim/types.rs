use serde::{Deserialize, Serialize};

use crate::math::{self, Vec2};

/// Planar pose; `theta` is kept in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: math::normalize_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// Expresses a world-frame vector in the body frame.
    pub fn to_body(&self, v: Vec2) -> Vec2 {
        v.rotate(-self.theta)
    }

    /// Expresses a body-frame vector in the world frame.
    pub fn to_world(&self, v: Vec2) -> Vec2 {
        v.rotate(self.theta)
    }
}

/// Omnidirectional body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { vx: 0.0, vy: 0.0, omega: 0.0 };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn speed(&self) -> f64 {
        self.linear().norm()
    }

    /// Scales the translation to at most `max_speed` and clips `omega`.
    pub fn clamped(&self, max_speed: f64, max_turn_rate: f64) -> Self {
        let v = self.linear().clamp_norm(max_speed);
        Self { vx: v.x, vy: v.y, omega: self.omega.clamp(-max_turn_rate, max_turn_rate) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    pub radius: f64,
    pub max_speed: f64,
    pub max_turn_rate: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self { radius: 0.3, max_speed: 0.8, max_turn_rate: 1.5 }
    }
}

pub const PLATE_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobotState {
    pub pose: Pose,
    /// Achieved body-frame velocity over the last step.
    pub velocity: VelocityCommand,
    pub radius: f64,
}

impl RobotState {
    pub fn plate_count(&self) -> usize {
        PLATE_COUNT
    }
}

/// Index of the tactile plate whose arc contains body-frame `azimuth`.
///
/// Plate `k` is centered at `k·60°` and spans ±30° around it.
pub fn plate_for_azimuth(azimuth: f64) -> usize {
    let arc = std::f64::consts::TAU / PLATE_COUNT as f64;
    let a = math::wrap_positive(azimuth + arc / 2.0);
    ((a / arc).floor() as usize).min(PLATE_COUNT - 1)
}

/// Outward normal of plate `k`, body frame.
pub fn plate_normal(k: usize) -> Vec2 {
    Vec2::from_angle(k as f64 * std::f64::consts::TAU / PLATE_COUNT as f64)
}

/// One 360° (or partial) range scan in the robot body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    /// `None` marks a beam with no return within `range_max`.
    pub ranges: Vec<Option<f64>>,
    pub range_max: f64,
}

impl LaserScan {
    /// Body-frame azimuth of beam `i`.
    pub fn angle_of(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }
}

/// Per-plate contact force magnitudes, newtons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TactileFrame {
    pub forces: [f64; PLATE_COUNT],
}

impl TactileFrame {
    pub fn is_quiet(&self) -> bool {
        self.forces.iter().all(|&f| f == 0.0)
    }
}

/// A human as reported by the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEstimate {
    pub id: u32,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub radius: f64,
    pub class: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn plate_arcs() {
        assert_eq!(plate_for_azimuth(0.0), 0);
        assert_eq!(plate_for_azimuth(PI / 2.0), 2);
        assert_eq!(plate_for_azimuth(PI), 3);
        assert_eq!(plate_for_azimuth(-2.0 * PI / 3.0), 4);
        assert_eq!(plate_for_azimuth(-0.7), 5);
        assert_eq!(plate_for_azimuth(29f64.to_radians()), 0);
        assert_eq!(plate_for_azimuth(31f64.to_radians()), 1);
    }

    #[test]
    fn clamp_scales_translation() {
        let c = VelocityCommand::new(3.0, 4.0, -9.0).clamped(1.0, 1.5);
        assert!((c.speed() - 1.0).abs() < 1e-12);
        assert!((c.vx - 0.6).abs() < 1e-12);
        assert_eq!(c.omega, -1.5);
    }

    #[test]
    fn pose_normalizes_heading() {
        let p = Pose::new(0.0, 0.0, 3.0 * PI);
        assert!((p.theta - PI).abs() < 1e-12);
    }
}
