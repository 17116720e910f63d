//! Deterministic fixed-timestep world: an omnidirectional disc robot, scripted
//! pedestrians and the sensors the navigation stack consumes.
//!
//! The seeded RNG inside [`World`] is the only source of randomness, and it
//! is only drawn from when camera noise is enabled.

mod human;
mod sensors;
mod types;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use human::{policy_step, HumanAgent, PolicyKind, PolicyState};
pub use sensors::{
    camera_detect, cast_disc, cast_static, lidar_scan, line_of_sight, overlapping_cells, tactile_sample, SensorConfig,
};
pub use types::{
    plate_for_azimuth, plate_normal, HumanEstimate, LaserScan, Pose, RobotParams, RobotState, TactileFrame, VelocityCommand,
    PLATE_COUNT,
};

use crate::costmap::{GridSpec, OccupancyGrid};
use crate::math::{self, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SimError {
    SimError::Invalid { field: field.into(), reason: reason.into() }
}

/// World-level settings that are not per-sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Fixed tick length, seconds.
    pub dt: f64,
    /// Speed cap for operator-driven pedestrians, m/s.
    pub human_max_speed: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { dt: 0.05, human_max_speed: 1.5 }
    }
}

/// Everything one tick of the simulator needs. Stepped by a single owner.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: GridSpec,
    pub occupancy: OccupancyGrid,
    pub robot: RobotState,
    pub robot_params: RobotParams,
    pub humans: Vec<HumanAgent>,
    pub sensors: SensorConfig,
    pub config: WorldConfig,
    /// Externally injected touches `(body azimuth, newtons)` for the next tick.
    pub injected_touches: Vec<(f64, f64)>,
    tick: u64,
    rng: ChaCha8Rng,
}

impl World {
    /// Builds a world, rejecting ill-posed setups (robot inside a wall,
    /// duplicate human ids, humans outside the grid).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: GridSpec,
        occupancy: OccupancyGrid,
        robot_pose: Pose,
        robot_params: RobotParams,
        humans: Vec<HumanAgent>,
        sensors: SensorConfig,
        config: WorldConfig,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !occupancy.matches(&spec) {
            return Err(invalid("grid", "occupancy does not match grid dimensions"));
        }
        if !(robot_params.radius > 0.0) || !(robot_params.max_speed > 0.0) || !(robot_params.max_turn_rate > 0.0) {
            return Err(invalid("robot", "radius, max_speed and max_turn_rate must be positive"));
        }
        if !(config.dt > 0.0) || !(config.human_max_speed > 0.0) {
            return Err(invalid("config.world", "dt and human_max_speed must be positive"));
        }
        sensors.validate().map_err(|r| invalid("config.sensors", r))?;
        let p = robot_pose.position();
        if spec.cell_of(p).is_none() {
            return Err(invalid("robot.pose", "outside the grid"));
        }
        if !overlapping_cells(&spec, &occupancy, p, robot_params.radius).is_empty() {
            return Err(invalid("robot.pose", "robot overlaps a static obstacle"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, h) in humans.iter().enumerate() {
            if !ids.insert(h.id) {
                return Err(invalid(format!("humans[{i}].id"), format!("duplicate id {}", h.id)));
            }
            if !(h.radius > 0.0) {
                return Err(invalid(format!("humans[{i}].radius"), "must be positive"));
            }
            if spec.cell_of(h.position()).is_none() {
                return Err(invalid(format!("humans[{i}].pose"), "outside the grid"));
            }
            h.policy.validate().map_err(|r| invalid(format!("humans[{i}].policy"), r))?;
        }
        let robot = RobotState {
            pose: Pose::new(robot_pose.x, robot_pose.y, robot_pose.theta),
            velocity: VelocityCommand::ZERO,
            radius: robot_params.radius,
        };
        Ok(Self {
            spec,
            occupancy,
            robot,
            robot_params,
            humans,
            sensors,
            config,
            injected_touches: Vec::new(),
            tick: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn human(&self, id: u32) -> Option<&HumanAgent> {
        self.humans.iter().find(|h| h.id == id)
    }

    pub fn human_mut(&mut self, id: u32) -> Option<&mut HumanAgent> {
        self.humans.iter_mut().find(|h| h.id == id)
    }

    /// Full lidar scan from the robot with the configured beam count and range.
    pub fn scan(&self) -> LaserScan {
        lidar_scan(self, &self.robot.pose, self.sensors.lidar_beams, self.sensors.lidar_range)
    }

    /// Camera detections from the robot, drawing noise from the world RNG.
    pub fn detect(&mut self) -> Vec<HumanEstimate> {
        let mut rng = self.rng.clone();
        let pose = self.robot.pose;
        let out = camera_detect(self, &pose, self.sensors.camera_fov, self.sensors.camera_range, self.sensors.camera_noise, &mut rng);
        self.rng = rng;
        out
    }

    pub fn tactile(&self) -> TactileFrame {
        tactile_sample(self)
    }

    /// Ids of humans whose discs overlap the robot.
    pub fn touching_humans(&self) -> Vec<u32> {
        let c = self.robot.pose.position();
        self.humans.iter().filter(|h| h.position().distance(c) < h.radius + self.robot.radius).map(|h| h.id).collect()
    }

    /// Advances the world by one tick under body-frame command `cmd`.
    ///
    /// Panics if `dt` differs from the configured tick.
    pub fn step(&mut self, cmd: VelocityCommand, dt: f64) {
        assert!((dt - self.config.dt).abs() < 1e-12, "step dt {dt} differs from configured tick {}", self.config.dt);
        let cmd = cmd.clamped(self.robot_params.max_speed, self.robot_params.max_turn_rate);
        let pose = self.robot.pose;
        let displacement = pose.to_world(cmd.linear()) * dt;
        let mut p = pose.position() + displacement;
        p = self.resolve_static_overlap(p);
        self.robot.pose = Pose::new(p.x, p.y, pose.theta + cmd.omega * dt);
        self.robot.velocity = cmd;

        let touching = self.touching_humans();
        let robot_pose = self.robot.pose;
        let tick = self.tick;
        let max_speed = self.config.human_max_speed;
        self.humans = self
            .humans
            .iter()
            .map(|h| policy_step(h, &robot_pose, touching.contains(&h.id), tick, dt, max_speed))
            .collect();
        self.injected_touches.clear();
        self.tick += 1;
    }

    /// Pushes the robot disc out of static cells along the axis of least
    /// penetration. A few passes settle corners.
    fn resolve_static_overlap(&self, mut p: Vec2) -> Vec2 {
        let r = self.robot.radius;
        for _ in 0..4 {
            let hits = overlapping_cells(&self.spec, &self.occupancy, p, r);
            if hits.is_empty() {
                break;
            }
            for (cell, _) in hits {
                let (min, max) = sensors::cell_bounds(&self.spec, cell);
                let closest = Vec2::new(p.x.clamp(min.x, max.x), p.y.clamp(min.y, max.y));
                let d = p - closest;
                let dist = d.norm();
                if dist >= r {
                    continue;
                }
                if dist > 1e-12 {
                    p = closest + d * (r / dist);
                } else {
                    // center inside the cell: leave through the nearest side
                    let exits = [(p.x - min.x, Vec2::new(min.x - r, p.y)), (max.x - p.x, Vec2::new(max.x + r, p.y)), (p.y - min.y, Vec2::new(p.x, min.y - r)), (max.y - p.y, Vec2::new(p.x, max.y + r))];
                    let best = exits.iter().fold(exits[0], |a, b| if b.0 < a.0 { *b } else { a });
                    p = best.1;
                }
            }
        }
        p
    }

    /// Heading error helper used by callers that turn toward a world bearing.
    pub fn heading_error(&self, target: f64) -> f64 {
        math::normalize_angle(target - self.robot.pose.theta)
    }
}
