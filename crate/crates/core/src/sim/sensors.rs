//! Simulated lidar, camera and tactile skin. All are pure functions of the
//! world state (the camera additionally draws from the caller's RNG when
//! noise is enabled).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::human::HumanAgent;
use super::types::{plate_for_azimuth, HumanEstimate, LaserScan, Pose, TactileFrame};
use super::World;
use crate::costmap::{Cell, GridRay, GridSpec, OccupancyGrid};
use crate::math::{self, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub lidar_beams: usize,
    pub lidar_range: f64,
    /// Full horizontal field of view, radians.
    pub camera_fov: f64,
    pub camera_range: f64,
    /// Standard deviation of position noise on detections, meters.
    pub camera_noise: f64,
    /// Contact stiffness of the tactile plates, N/m.
    pub contact_stiffness: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            lidar_beams: 360,
            lidar_range: 6.0,
            camera_fov: 70f64.to_radians(),
            camera_range: 4.0,
            camera_noise: 0.0,
            contact_stiffness: 300.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.lidar_beams == 0 {
            return Err("lidar_beams must be >= 1".into());
        }
        if !(self.lidar_range > 0.0) || !(self.camera_range > 0.0) {
            return Err("sensor ranges must be positive".into());
        }
        if !(self.camera_fov > 0.0 && self.camera_fov < std::f64::consts::TAU) {
            return Err(format!("camera_fov must be in (0, 2π), got {}", self.camera_fov));
        }
        if !(self.camera_noise >= 0.0) || !(self.contact_stiffness > 0.0) {
            return Err("camera_noise must be >= 0 and contact_stiffness > 0".into());
        }
        Ok(())
    }
}

/// Distance along a ray to the first occupied cell, if any within `max_t`.
pub fn cast_static(spec: &GridSpec, occupancy: &OccupancyGrid, from: Vec2, dir: Vec2, max_t: f64) -> Option<f64> {
    for rc in GridRay::new(spec, from, dir, max_t) {
        if !spec.contains(rc.cell) {
            return None;
        }
        if occupancy.is_occupied(rc.cell) {
            return Some(rc.t_enter);
        }
    }
    None
}

/// Distance along a ray to a disc, or `None` when missed. Origins inside
/// the disc see nothing.
pub fn cast_disc(from: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = center - from;
    let c = oc.norm_sq() - radius * radius;
    if c < 0.0 {
        return None;
    }
    let b = oc.dot(dir);
    let disc = b * b - c;
    if disc < 0.0 || b <= 0.0 {
        return None;
    }
    Some(b - disc.sqrt())
}

/// Simulated 360° scan: beam `i` points at body azimuth `i·2π/beam_count`.
/// Returns hit static cells and human discs.
pub fn lidar_scan(world: &World, robot_pose: &Pose, beam_count: usize, range_max: f64) -> LaserScan {
    let inc = std::f64::consts::TAU / beam_count as f64;
    let from = robot_pose.position();
    let ranges = (0..beam_count)
        .map(|i| {
            let dir = Vec2::from_angle(robot_pose.theta + i as f64 * inc);
            let mut best = cast_static(&world.spec, &world.occupancy, from, dir, range_max);
            for h in &world.humans {
                if let Some(t) = cast_disc(from, dir, h.position(), h.radius) {
                    if t <= range_max && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                }
            }
            best
        })
        .collect();
    LaserScan { angle_min: 0.0, angle_increment: inc, ranges, range_max }
}

/// True when the segment from `a` to `b` crosses no occupied cell.
pub fn line_of_sight(spec: &GridSpec, occupancy: &OccupancyGrid, a: Vec2, b: Vec2) -> bool {
    let Some(dir) = (b - a).normalized() else {
        return true;
    };
    cast_static(spec, occupancy, a, dir, a.distance(b)).is_none()
}

/// Humans visible to the forward camera: within range, within ±fov/2 of the
/// heading and not occluded by static cells. Positions are perturbed by
/// Gaussian noise when `noise` > 0.
pub fn camera_detect<R: Rng + ?Sized>(
    world: &World,
    robot_pose: &Pose,
    fov: f64,
    cam_range: f64,
    noise: f64,
    rng: &mut R,
) -> Vec<HumanEstimate> {
    let eye = robot_pose.position();
    let mut out = Vec::new();
    for h in &world.humans {
        let rel = h.position() - eye;
        if rel.norm() > cam_range {
            continue;
        }
        let bearing = math::normalize_angle(rel.angle() - robot_pose.theta);
        if bearing.abs() > fov / 2.0 {
            continue;
        }
        if !line_of_sight(&world.spec, &world.occupancy, eye, h.position()) {
            continue;
        }
        out.push(estimate_of(h, noise, rng));
    }
    out
}

fn estimate_of<R: Rng + ?Sized>(h: &HumanAgent, noise: f64, rng: &mut R) -> HumanEstimate {
    let mut position = h.position();
    if noise > 0.0 {
        let n = Normal::new(0.0, noise).expect("noise is positive");
        position.x += n.sample(rng);
        position.y += n.sample(rng);
    }
    let speed = h.velocity.norm();
    HumanEstimate { id: h.id, position, heading: h.pose.theta, speed, radius: h.radius, class: h.class.clone() }
}

/// Contact forces: every human or static cell overlapping the robot disc
/// pushes the plate facing it with `stiffness · penetration`.
pub fn tactile_sample(world: &World) -> TactileFrame {
    let mut frame = TactileFrame::default();
    let robot = &world.robot;
    let k = world.sensors.contact_stiffness;
    let center = robot.pose.position();
    let mut push = |toward: Vec2, depth: f64| {
        if depth <= 0.0 {
            return;
        }
        let azimuth = math::normalize_angle(toward.angle() - robot.pose.theta);
        frame.forces[plate_for_azimuth(azimuth)] += k * depth;
    };
    for h in &world.humans {
        let d = h.position() - center;
        let depth = robot.radius + h.radius - d.norm();
        push(d, depth);
    }
    for (cell, closest) in overlapping_cells(&world.spec, &world.occupancy, center, robot.radius) {
        let d = closest - center;
        let toward = if d.norm() > 1e-12 { d } else { world.spec.center_of(cell) - center };
        push(toward, robot.radius - d.norm());
    }
    for &(azimuth, force) in &world.injected_touches {
        if force > 0.0 {
            frame.forces[plate_for_azimuth(azimuth)] += force;
        }
    }
    frame
}

/// Occupied cells intersecting a disc, with the closest point of each cell
/// to the disc center. Row-major order.
pub fn overlapping_cells(spec: &GridSpec, occupancy: &OccupancyGrid, center: Vec2, radius: f64) -> Vec<(Cell, Vec2)> {
    let lo = spec.cell_of_unbounded(Vec2::new(center.x - radius, center.y - radius));
    let hi = spec.cell_of_unbounded(Vec2::new(center.x + radius, center.y + radius));
    let mut out = Vec::new();
    for y in lo.y..=hi.y {
        for x in lo.x..=hi.x {
            let c = Cell::new(x, y);
            if !occupancy.is_occupied(c) {
                continue;
            }
            let (min, max) = cell_bounds(spec, c);
            let closest = Vec2::new(center.x.clamp(min.x, max.x), center.y.clamp(min.y, max.y));
            if closest.distance(center) < radius {
                out.push((c, closest));
            }
        }
    }
    out
}

pub(crate) fn cell_bounds(spec: &GridSpec, c: Cell) -> (Vec2, Vec2) {
    let min = Vec2::new(spec.origin.x + c.x as f64 * spec.resolution, spec.origin.y + c.y as f64 * spec.resolution);
    (min, Vec2::new(min.x + spec.resolution, min.y + spec.resolution))
}
