//! Proximity filter: a compliance controller sitting between the local
//! planner and the base.
//!
//! While moving, nearby laser returns add an artificial-potential-field
//! repulsion to the nominal command; while (nearly) static the laser is
//! ignored. A tactile contact overrides everything: the robot backs away from
//! the contact for `repulse_time`, holds still until `wait_time` has passed
//! since the contact, and then hands control back.

use serde::{Deserialize, Serialize};

use crate::math::Vec2;
use crate::sim::{plate_normal, LaserScan, TactileFrame, VelocityCommand, PLATE_COUNT};

/// Slack used when comparing accumulated phase time with tick multiples.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Laser influence distance, meters.
    pub influence_distance: f64,
    pub repulsion_gain: f64,
    /// Plate force above which a contact is registered, newtons.
    pub force_threshold: f64,
    /// Speed of the tactile back-off, m/s.
    pub repulse_speed: f64,
    /// Duration of the back-off, seconds.
    pub repulse_time: f64,
    /// Time from contact until control is handed back, seconds.
    pub wait_time: f64,
    /// Commanded translational speed below which the robot counts as static.
    pub static_speed: f64,
    /// Output limits, taken from the robot.
    #[serde(skip)]
    pub max_speed: f64,
    #[serde(skip)]
    pub max_turn_rate: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            influence_distance: 1.0,
            repulsion_gain: 0.05,
            force_threshold: 2.0,
            repulse_speed: 0.3,
            repulse_time: 1.0,
            wait_time: 5.0,
            static_speed: 0.01,
            max_speed: 0.8,
            max_turn_rate: 1.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("influence_distance", self.influence_distance),
            ("repulsion_gain", self.repulsion_gain),
            ("force_threshold", self.force_threshold),
            ("repulse_speed", self.repulse_speed),
            ("repulse_time", self.repulse_time),
            ("wait_time", self.wait_time),
            ("static_speed", self.static_speed),
            ("max_speed", self.max_speed),
            ("max_turn_rate", self.max_turn_rate),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.wait_time < self.repulse_time {
            return Err(format!("wait_time {} must be >= repulse_time {}", self.wait_time, self.repulse_time));
        }
        Ok(())
    }

    /// Number of ticks the back-off lasts.
    pub fn repulse_ticks(&self, dt: f64) -> u64 {
        (self.repulse_time / dt - TIME_EPS).ceil().max(0.0) as u64
    }

    /// Number of ticks from contact until control returns.
    pub fn wait_ticks(&self, dt: f64) -> u64 {
        (self.wait_time / dt - TIME_EPS).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPhase {
    Pass,
    Repulsing,
    Waiting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub phase: FilterPhase,
    /// Seconds spent in the current phase.
    pub phase_elapsed: f64,
    /// Body-frame azimuth of the contact that started the override.
    pub contact_azimuth: f64,
}

impl Default for FilterState {
    fn default() -> Self {
        Self { phase: FilterPhase::Pass, phase_elapsed: 0.0, contact_azimuth: 0.0 }
    }
}

impl FilterState {
    fn enter(phase: FilterPhase, contact_azimuth: f64) -> Self {
        Self { phase, phase_elapsed: 0.0, contact_azimuth }
    }

    pub fn is_overriding(&self) -> bool {
        self.phase != FilterPhase::Pass
    }
}

/// A resolved tactile contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    /// Body-frame direction of the contact, radians.
    pub azimuth: f64,
    /// Magnitude of the summed plate forces, newtons.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FilterEvent {
    ContactStarted { azimuth: f64, magnitude: f64 },
    TimeoutExpired,
}

/// Artificial-potential-field repulsion from a scan, in the body frame.
///
/// Each beam closer than the influence distance contributes
/// `gain·(1/d − 1/d0)/d²` pointing from the hit back toward the robot.
pub fn laser_repulsion(scan: &LaserScan, cfg: &FilterConfig) -> Vec2 {
    let d0 = cfg.influence_distance;
    let mut f = Vec2::ZERO;
    for (i, r) in scan.ranges.iter().enumerate() {
        let Some(d) = *r else { continue };
        if d <= 0.0 || d >= d0 {
            continue;
        }
        let magnitude = cfg.repulsion_gain * (1.0 / d - 1.0 / d0) / (d * d);
        f = f + Vec2::from_angle(scan.angle_of(i)) * -magnitude;
    }
    f
}

/// Fuses the plates above threshold into one contact direction.
///
/// Returns `None` when no plate exceeds the threshold, or when the forces
/// cancel so that their vector sum is not above the threshold.
pub fn contact_resolve(frame: &TactileFrame, cfg: &FilterConfig) -> Option<ContactEvent> {
    let mut sum = Vec2::ZERO;
    let mut any = false;
    for k in 0..PLATE_COUNT {
        let f = frame.forces[k];
        if f > cfg.force_threshold {
            sum = sum + plate_normal(k) * f;
            any = true;
        }
    }
    if !any {
        return None;
    }
    let magnitude = sum.norm();
    if magnitude <= cfg.force_threshold {
        log::warn!("tactile forces cancel out (|sum| = {magnitude:.3} N); contact ignored");
        return None;
    }
    Some(ContactEvent { azimuth: sum.angle(), magnitude })
}

/// Output of one filter update.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub command: VelocityCommand,
    pub state: FilterState,
    pub events: Vec<FilterEvent>,
}

fn repulse_command(azimuth: f64, cfg: &FilterConfig) -> VelocityCommand {
    let v = Vec2::from_angle(azimuth) * -cfg.repulse_speed;
    VelocityCommand::new(v.x, v.y, 0.0)
}

/// One filter update.
pub fn filter(
    cmd_in: VelocityCommand,
    scan: &LaserScan,
    frame: &TactileFrame,
    state: &FilterState,
    cfg: &FilterConfig,
    dt: f64,
) -> FilterOutput {
    let contact = contact_resolve(frame, cfg);
    let mut events = Vec::new();

    let start_repulse = |c: ContactEvent, events: &mut Vec<FilterEvent>| {
        events.push(FilterEvent::ContactStarted { azimuth: c.azimuth, magnitude: c.magnitude });
        (repulse_command(c.azimuth, cfg), FilterState::enter(FilterPhase::Repulsing, c.azimuth))
    };

    match state.phase {
        FilterPhase::Repulsing => {
            let elapsed = state.phase_elapsed + dt;
            let ticks = (elapsed / dt + TIME_EPS).floor() as u64;
            if ticks >= cfg.repulse_ticks(dt) {
                let next = FilterState::enter(FilterPhase::Waiting, state.contact_azimuth);
                return FilterOutput { command: VelocityCommand::ZERO, state: next, events };
            }
            let next = FilterState { phase_elapsed: elapsed, ..*state };
            FilterOutput { command: repulse_command(state.contact_azimuth, cfg), state: next, events }
        }
        FilterPhase::Waiting => {
            if let Some(c) = contact {
                let (command, state) = start_repulse(c, &mut events);
                return FilterOutput { command, state, events };
            }
            let elapsed = state.phase_elapsed + dt;
            let ticks = (elapsed / dt + TIME_EPS).floor() as u64;
            let needed = cfg.wait_ticks(dt).saturating_sub(cfg.repulse_ticks(dt));
            if ticks >= needed {
                events.push(FilterEvent::TimeoutExpired);
                let (command, state) = pass_through(cmd_in, scan, cfg);
                return FilterOutput { command, state, events };
            }
            let next = FilterState { phase_elapsed: elapsed, ..*state };
            FilterOutput { command: VelocityCommand::ZERO, state: next, events }
        }
        FilterPhase::Pass => {
            if let Some(c) = contact {
                let (command, state) = start_repulse(c, &mut events);
                return FilterOutput { command, state, events };
            }
            let (command, state) = pass_through(cmd_in, scan, cfg);
            FilterOutput { command, state, events }
        }
    }
}

fn pass_through(cmd_in: VelocityCommand, scan: &LaserScan, cfg: &FilterConfig) -> (VelocityCommand, FilterState) {
    let command = if cmd_in.speed() < cfg.static_speed {
        cmd_in
    } else {
        let v = cmd_in.linear() + laser_repulsion(scan, cfg);
        VelocityCommand::new(v.x, v.y, cmd_in.omega).clamped(cfg.max_speed, cfg.max_turn_rate)
    };
    (command, FilterState::default())
}
