use super::{Path, PlannerConfig};
use crate::math::{self, Vec2};
use crate::sim::{Pose, RobotParams, VelocityCommand};

/// Closest point on the waypoint polyline to `p`, as (segment index, point).
/// Ties go to the earlier segment.
pub fn closest_point(path: &Path, p: Vec2) -> (usize, Vec2) {
    let w = &path.waypoints;
    if w.len() < 2 {
        return (0, w.first().copied().unwrap_or(p));
    }
    let mut best = (0, w[0], f64::INFINITY);
    for i in 0..w.len() - 1 {
        let (a, b) = (w[i], w[i + 1]);
        let ab = b - a;
        let len_sq = ab.norm_sq();
        let s = if len_sq > 0.0 { ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + ab * s;
        let d = q.distance(p);
        if d < best.2 {
            best = (i, q, d);
        }
    }
    (best.0, best.1)
}

// Walks `dist` meters along the polyline from point `q` on segment `seg`.
fn advance(path: &Path, seg: usize, q: Vec2, mut dist: f64) -> Vec2 {
    let w = &path.waypoints;
    let mut at = q;
    for next in &w[(seg + 1).min(w.len())..] {
        let step = at.distance(*next);
        if step >= dist {
            return at + (*next - at) * (dist / step);
        }
        dist -= step;
        at = *next;
    }
    *w.last().unwrap_or(&q)
}

/// Nominal body-frame command steering toward a carrot `lookahead` meters
/// ahead of the closest path point. Speed ramps down linearly inside four
/// goal tolerances; the heading turns toward the direction of travel.
pub fn local_follow(path: &Path, pose: &Pose, cfg: &PlannerConfig, robot: &RobotParams) -> VelocityCommand {
    let Some(goal) = path.goal() else {
        return VelocityCommand::ZERO;
    };
    let pos = pose.position();
    let d_goal = pos.distance(goal);
    if d_goal <= cfg.goal_tolerance {
        return VelocityCommand::ZERO;
    }
    let (seg, q) = closest_point(path, pos);
    let carrot = advance(path, seg, q, cfg.lookahead);
    let dir = (carrot - pos).normalized().or_else(|| (goal - pos).normalized()).unwrap_or(Vec2::ZERO);
    let speed = robot.max_speed * (d_goal / (4.0 * cfg.goal_tolerance)).min(1.0);
    let v = pose.to_body(dir * speed);
    let err = math::normalize_angle(dir.angle() - pose.theta);
    let omega = (cfg.heading_gain * err).clamp(-robot.max_turn_rate, robot.max_turn_rate);
    VelocityCommand::new(v.x, v.y, omega)
}
