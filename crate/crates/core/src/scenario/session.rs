//! The closed sense → costmap → plan → filter → act loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bundled;
use super::protocol::{ClientMessage, HumanView, RobotView, SessionView};
use super::schema::{load_scenario_value, Scenario, ScenarioDoc, ScenarioError};
use crate::behavior::{
    assign_cost_or_adult, find_blocking_human, fsm_step, maintain_escalations, nearest_path_index, Directive,
    EscalationRecord, FsmInputs, FsmState,
};
use crate::costmap::{
    build_obstacle_layer, build_semantic_obstacle_layer, build_static_layer, inflate_layer, inflate_sources, proxemic_field,
    Cell, CostLayer, INSCRIBED, LETHAL,
};
use crate::math::Vec2;
use crate::planner::{local_follow, path_blocked, plan_global, Path, PlanError, ReplanTrigger};
use crate::proximity::{filter, FilterEvent, FilterState};
use crate::sim::{HumanEstimate, LaserScan, Pose, TactileFrame, VelocityCommand, World};

/// Consecutive navigating ticks without moving more than [`STUCK_DISTANCE`]
/// after which a run is declared stuck.
pub const STUCK_TICKS: u64 = 200;
pub const STUCK_DISTANCE: f64 = 0.01;

/// Lidar returns this close to a detected human's disc are attributed to the
/// human rather than to an unknown obstacle.
const HUMAN_MASK_MARGIN: f64 = 0.15;

/// Slack between robot and human discs for a touch to be attributed.
const CONTACT_SLACK: f64 = 0.05;

/// A human out of view is extrapolated along its last estimated velocity for
/// at most this long, then held in place.
const TRACK_HORIZON: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    Timeout,
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub outcome: Outcome,
    pub ticks: u64,
    /// Distance the robot center traveled, meters.
    pub path_length: f64,
    pub contacts: u32,
    pub escalations: u32,
    /// Last named region the robot center entered.
    pub exit_used: Option<String>,
    pub final_pose: Pose,
}

/// The layers built on the latest tick.
#[derive(Debug, Clone)]
pub struct Layers {
    pub static_layer: CostLayer,
    pub obstacle: CostLayer,
    pub semantic: CostLayer,
    pub inflation: CostLayer,
    pub proxemic: CostLayer,
    pub composite: CostLayer,
}

impl Layers {
    pub fn named(&self) -> [(&'static str, &CostLayer); 6] {
        [
            ("static", &self.static_layer),
            ("obstacle", &self.obstacle),
            ("semantic", &self.semantic),
            ("inflation", &self.inflation),
            ("proxemic", &self.proxemic),
            ("composite", &self.composite),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("no human with id {0}")]
    UnknownHuman(u32),
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    tick: u64,
    kind: &'a str,
    payload: &'a T,
}

#[derive(Serialize)]
struct HeaderPayload<'a> {
    scenario: &'a ScenarioDoc,
}

#[derive(Serialize)]
struct TickPayload {
    robot: Pose,
    cmd: VelocityCommand,
    fsm: &'static str,
    filter: crate::proximity::FilterPhase,
    humans: Vec<(u32, f64, f64)>,
}

#[derive(Serialize)]
struct FsmPayload {
    from: &'static str,
    to: &'static str,
    trigger: &'static str,
    state: FsmState,
}

#[derive(Serialize)]
struct PlanPayload<'a> {
    reason: &'a str,
    total_cost: f64,
    length: f64,
    cells: Vec<(i32, i32)>,
    waypoints: &'a [Vec2],
}

#[derive(Serialize)]
struct RejectedPayload<'a> {
    message: &'a str,
    error: &'a str,
}

#[derive(Serialize)]
struct NoPathPayload<'a> {
    reason: &'a str,
    error: String,
}

/// One scenario run. Owns the world and every piece of stack state, and
/// records an event log line for each tick and event.
pub struct Session {
    scenario: Scenario,
    world: World,
    layers: Layers,
    static_inflated: CostLayer,
    fsm: FsmState,
    filter_state: FilterState,
    escalations: Vec<EscalationRecord>,
    detections: Vec<HumanEstimate>,
    /// Every human detected so far, by id, with the tick it was last seen.
    tracks: BTreeMap<u32, (HumanEstimate, u64)>,
    /// `tracks` extrapolated to the current tick.
    known: Vec<HumanEstimate>,
    last_frame: TactileFrame,
    path: Option<Path>,
    pending_replan: Option<&'static str>,
    last_plan_failure: Option<u64>,
    traveled: f64,
    contacts: u32,
    escalation_count: u32,
    exit_used: Option<String>,
    stuck_anchor: Vec2,
    stuck_ticks: u64,
    report: Option<RunReport>,
    log: Vec<String>,
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        let world = scenario.build_world()?;
        let static_layer = build_static_layer(&scenario.occupancy, &scenario.spec).map_err(|e| ScenarioError::Invalid {
            field: "grid".into(),
            reason: e.to_string(),
        })?;
        let static_inflated = inflate_layer(&static_layer, &scenario.config().inflation);
        let empty = CostLayer::new(scenario.spec);
        let layers = Layers {
            static_layer: static_layer.clone(),
            obstacle: empty.clone(),
            semantic: empty.clone(),
            inflation: static_inflated.clone(),
            proxemic: empty,
            composite: static_inflated.clone(),
        };
        let stuck_anchor = world.robot.pose.position();
        let mut s = Self {
            scenario,
            world,
            layers,
            static_inflated,
            fsm: FsmState::Idle,
            filter_state: FilterState::default(),
            escalations: Vec::new(),
            detections: Vec::new(),
            tracks: BTreeMap::new(),
            known: Vec::new(),
            last_frame: TactileFrame::default(),
            path: None,
            pending_replan: None,
            last_plan_failure: None,
            traveled: 0.0,
            contacts: 0,
            escalation_count: 0,
            exit_used: None,
            stuck_anchor,
            stuck_ticks: 0,
            report: None,
            log: Vec::new(),
        };
        let doc = s.scenario.doc.clone();
        s.record("header", &HeaderPayload { scenario: &doc });
        Ok(s)
    }

    fn record<T: Serialize>(&mut self, kind: &str, payload: &T) {
        let line = serde_json::to_string(&Record { tick: self.world.tick(), kind, payload }).expect("log records serialize");
        self.log.push(line);
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn layers(&self) -> &Layers {
        &self.layers
    }

    pub fn composite(&self) -> &CostLayer {
        &self.layers.composite
    }

    pub fn fsm(&self) -> FsmState {
        self.fsm
    }

    pub fn filter_state(&self) -> &FilterState {
        &self.filter_state
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_ref()
    }

    pub fn escalations(&self) -> &[EscalationRecord] {
        &self.escalations
    }

    pub fn detections(&self) -> &[HumanEstimate] {
        &self.detections
    }

    /// Humans seen at some point, at their current estimated positions.
    pub fn known_humans(&self) -> &[HumanEstimate] {
        &self.known
    }

    pub fn tick_count(&self) -> u64 {
        self.world.tick()
    }

    pub fn is_finished(&self) -> bool {
        self.report.is_some()
    }

    /// The final report, once the run has ended.
    pub fn report(&self) -> Option<&RunReport> {
        self.report.as_ref()
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    /// Removes and returns the log lines recorded so far.
    pub fn take_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }

    /// Runs until the goal is reached, the tick budget is spent or the robot
    /// is stuck.
    pub fn run(&mut self) -> RunReport {
        while self.tick() {}
        self.report.clone().expect("finished runs have a report")
    }

    pub fn view(&self, paused: bool) -> SessionView {
        let r = &self.world.robot;
        SessionView {
            scenario: self.scenario.name().to_string(),
            tick: self.world.tick(),
            paused,
            robot: RobotView {
                x: r.pose.x,
                y: r.pose.y,
                theta: r.pose.theta,
                vx: r.velocity.vx,
                vy: r.velocity.vy,
                omega: r.velocity.omega,
                radius: r.radius,
                plates: self.last_frame.forces,
            },
            humans: self
                .world
                .humans
                .iter()
                .map(|h| HumanView {
                    id: h.id,
                    x: h.pose.x,
                    y: h.pose.y,
                    theta: h.pose.theta,
                    radius: h.radius,
                    class: h.class.clone(),
                    policy: h.policy.name().to_string(),
                    detected: self.detections.iter().any(|d| d.id == h.id),
                })
                .collect(),
            fsm: self.fsm,
            filter: self.filter_state.phase,
            path: self.path.as_ref().map(|p| p.waypoints.clone()).unwrap_or_default(),
            escalations: self.escalations.clone(),
            outcome: self.report.as_ref().map(|r| r.outcome),
        }
    }

    /// Applies an operator message and records it. Pause, resume and step
    /// only affect the caller's clock, so they are recorded without effect.
    pub fn apply_control(&mut self, msg: &ClientMessage) -> Result<(), ControlError> {
        match msg {
            ClientMessage::Teleop { human, vx, vy, .. } => {
                if !(vx.is_finite() && vy.is_finite()) {
                    return Err(ControlError::Invalid("velocity must be finite".into()));
                }
                let h = self.world.human_mut(*human).ok_or(ControlError::UnknownHuman(*human))?;
                h.set_teleop(Vec2::new(*vx, *vy));
                self.record("control", msg);
            }
            ClientMessage::Touch { azimuth, force, .. } => {
                if !(azimuth.is_finite() && *force >= 0.0 && force.is_finite()) {
                    return Err(ControlError::Invalid("azimuth must be finite and force >= 0".into()));
                }
                self.world.injected_touches.push((*azimuth, *force));
                self.record("control", msg);
            }
            ClientMessage::Pause { .. } | ClientMessage::Resume { .. } | ClientMessage::Step { .. } => {
                self.record("control", msg);
            }
            ClientMessage::Reset { .. } => {
                self.record("control", msg);
                self.restart(self.scenario.clone())?;
            }
            ClientMessage::Load { scenario, .. } => {
                let next = match scenario {
                    serde_json::Value::String(name) => {
                        bundled::bundled_scenario(name).ok_or_else(|| ScenarioError::Unknown(name.clone()))??
                    }
                    other => load_scenario_value(other.clone())?,
                };
                self.record("control", msg);
                self.restart(next)?;
            }
        }
        Ok(())
    }

    /// Records a control message that was refused, so the log shows what a
    /// client attempted. Has no effect on the simulation.
    pub fn record_rejected(&mut self, message: &str, error: &str) {
        self.record("rejected", &RejectedPayload { message, error });
    }

    fn restart(&mut self, scenario: Scenario) -> Result<(), ScenarioError> {
        let log = std::mem::take(&mut self.log);
        let mut fresh = Session::new(scenario)?;
        let mut merged = log;
        merged.append(&mut fresh.log);
        fresh.log = merged;
        *self = fresh;
        Ok(())
    }

    /// Advances one tick. Returns false once the run has ended.
    pub fn tick(&mut self) -> bool {
        if self.report.is_some() {
            return false;
        }
        let t = self.world.tick();
        let dt = self.world.dt();
        let cfg = self.scenario.config().clone();
        let filter_cfg = self.scenario.filter_config();
        let goal = self.scenario.goal();
        let pose = self.world.robot.pose;

        // sense
        let scan = self.world.scan();
        self.detections = self.world.detect();
        self.update_tracks(t, dt, &scan, &pose);
        let frame = self.world.tactile();
        self.last_frame = frame;

        // escalation bookkeeping
        let kept = maintain_escalations(&self.escalations, &self.known);
        let released: Vec<_> = self.escalations.iter().filter(|r| !kept.contains(r)).copied().collect();
        for r in &released {
            self.record("release", r);
        }
        self.escalations = kept;

        self.build_layers(&scan, &pose);

        // global planning
        if matches!(self.fsm, FsmState::Navigate) {
            if let Some(reason) = self.pending_replan.take() {
                self.replan(reason);
            } else if let Some(p) = &self.path {
                let from = nearest_path_index(p, pose.position(), &self.scenario.spec) + 1;
                if cfg.planner.replans_on(ReplanTrigger::Blocked) && path_blocked(p, &self.layers.composite, from) {
                    self.replan("blocked");
                }
            } else if cfg.planner.replans_on(ReplanTrigger::Retry) {
                let retry_ticks = (cfg.planner.retry_interval / dt - 1e-9).ceil().max(1.0) as u64;
                if self.last_plan_failure.is_none_or(|f| t >= f + retry_ticks) {
                    self.replan("retry");
                }
            }
        }

        // nominal command and compliance filter
        let nominal = match (&self.fsm, &self.path) {
            (FsmState::Navigate, Some(p)) => local_follow(p, &pose, &cfg.planner, &self.scenario.doc.robot.params),
            _ => VelocityCommand::ZERO,
        };
        let out = filter(nominal, &scan, &frame, &self.filter_state, &filter_cfg, dt);
        self.filter_state = out.state;
        let mut command = out.command;
        for e in &out.events {
            match e {
                FilterEvent::ContactStarted { .. } => {
                    self.contacts += 1;
                    self.record("contact", e);
                }
                FilterEvent::TimeoutExpired => self.record("timeout", e),
            }
        }

        // interaction state machine
        let goal_reached = goal.is_some_and(|(g, tol)| pose.position().distance(g) <= tol);
        let contact_human = if out.events.iter().any(|e| matches!(e, FilterEvent::ContactStarted { .. })) {
            self.touching_detection(&pose)
        } else {
            None
        };
        let (blocked, blocking_human) = match &self.path {
            Some(p) => {
                let from = nearest_path_index(p, pose.position(), &self.scenario.spec);
                let radius = self.world.robot.radius;
                (
                    path_blocked(p, &self.layers.composite, from + 1),
                    find_blocking_human(p, from, &self.known, radius, &self.scenario.spec).map(|b| b.0),
                )
            }
            None => (false, None),
        };
        let inputs = FsmInputs {
            tick: t,
            filter_events: &out.events,
            robot_pose: pose,
            detections: &self.known,
            contact_human,
            has_goal: goal.is_some(),
            goal_reached,
            path_blocked: blocked,
            blocking_human,
        };
        let step = fsm_step(&self.fsm, &inputs, &cfg.behavior, self.scenario.doc.robot.params.max_turn_rate);
        for d in &step.directives {
            match d {
                Directive::Rotate { omega } => command.omega = *omega,
                Directive::Replan => {
                    let escalating = step.directives.iter().any(|d| matches!(d, Directive::Escalate(_)));
                    if !escalating || cfg.planner.replans_on(ReplanTrigger::Escalation) {
                        self.pending_replan = Some(if escalating { "escalation" } else { step.trigger });
                    }
                }
                Directive::Escalate(rec) => {
                    self.escalation_count += 1;
                    self.escalations.retain(|r| r.human_id != rec.human_id);
                    self.escalations.push(*rec);
                    self.record("escalation", rec);
                }
            }
        }
        if step.state != self.fsm {
            let payload = FsmPayload { from: self.fsm.name(), to: step.state.name(), trigger: step.trigger, state: step.state };
            self.record("fsm", &payload);
            if matches!(step.state, FsmState::Escalated) {
                // rebuild so the replan on the next tick already sees the footprint
                self.build_layers(&scan, &pose);
            }
        }
        self.fsm = step.state;
        if matches!(self.fsm, FsmState::GoalReached) {
            command = VelocityCommand::ZERO;
        }

        // act
        let before = self.world.robot.pose.position();
        self.world.step(command, dt);
        let after = self.world.robot.pose.position();
        self.traveled += before.distance(after);
        if let Some(r) = self.scenario.doc.regions.iter().find(|r| r.contains(after)) {
            if self.exit_used.as_deref() != Some(r.name.as_str()) {
                self.exit_used = Some(r.name.clone());
            }
        }
        let payload = TickPayload {
            robot: self.world.robot.pose,
            cmd: command,
            fsm: self.fsm.name(),
            filter: self.filter_state.phase,
            humans: self.world.humans.iter().map(|h| (h.id, h.pose.x, h.pose.y)).collect(),
        };
        // tick records carry the index of the tick just executed
        let line = serde_json::to_string(&Record { tick: t, kind: "tick", payload: &payload }).expect("log records serialize");
        self.log.push(line);

        // termination
        if matches!(self.fsm, FsmState::Navigate) {
            if after.distance(self.stuck_anchor) > STUCK_DISTANCE {
                self.stuck_anchor = after;
                self.stuck_ticks = 0;
            } else {
                self.stuck_ticks += 1;
            }
        } else {
            self.stuck_anchor = after;
            self.stuck_ticks = 0;
        }
        let outcome = if matches!(self.fsm, FsmState::GoalReached) {
            Some(Outcome::GoalReached)
        } else if self.stuck_ticks >= STUCK_TICKS {
            Some(Outcome::Stuck)
        } else if self.world.tick() >= self.scenario.doc.max_ticks {
            Some(Outcome::Timeout)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            let report = RunReport {
                scenario: self.scenario.name().to_string(),
                outcome,
                ticks: self.world.tick(),
                path_length: self.traveled,
                contacts: self.contacts,
                escalations: self.escalation_count,
                exit_used: self.exit_used.clone(),
                final_pose: self.world.robot.pose,
            };
            self.record("report", &report);
            self.report = Some(report);
        }
        self.report.is_none()
    }

    fn update_tracks(&mut self, tick: u64, dt: f64, scan: &LaserScan, pose: &Pose) {
        for h in &self.detections {
            self.tracks.insert(h.id, (h.clone(), tick));
        }
        let mut known = Vec::with_capacity(self.tracks.len());
        let mut lost = Vec::new();
        for (id, (h, seen)) in &self.tracks {
            let mut h = h.clone();
            let age = ((tick - seen) as f64 * dt).min(TRACK_HORIZON);
            h.position = h.position + Vec2::from_angle(h.heading) * (h.speed * age);
            if *seen != tick && beam_passes_through(scan, pose, h.position) {
                lost.push(*id);
                continue;
            }
            known.push(h);
        }
        // the lidar sees through where an unseen human was thought to be
        for id in lost {
            self.tracks.remove(&id);
        }
        self.known = known;
    }

    fn touching_detection(&self, pose: &Pose) -> Option<u32> {
        let r = self.world.robot.radius;
        self.known
            .iter()
            .map(|h| (h.position.distance(pose.position()) - h.radius - r, h.id))
            .filter(|&(gap, _)| gap <= CONTACT_SLACK)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    fn build_layers(&mut self, scan: &LaserScan, pose: &Pose) {
        let cfg = self.scenario.config();
        let spec = self.scenario.spec;
        let from = pose.position();
        // returns on detected humans are handled semantically
        let mut masked = scan.clone();
        for (i, r) in masked.ranges.iter_mut().enumerate() {
            if let Some(d) = *r {
                let hit = from + Vec2::from_angle(pose.theta + scan.angle_of(i)) * d;
                if self.known.iter().any(|h| h.position.distance(hit) <= h.radius + HUMAN_MASK_MARGIN) {
                    *r = None;
                }
            }
        }
        let obstacle = build_obstacle_layer(&masked, pose, &spec);

        let table = &cfg.social_costs;
        let classed: Vec<HumanEstimate> = self
            .known
            .iter()
            .map(|h| {
                let mut h = h.clone();
                if !table.contains(&h.class) {
                    assign_cost_or_adult(&h, table);
                    h.class = crate::costmap::ADULT.to_string();
                }
                h
            })
            .collect();
        let semantic = build_semantic_obstacle_layer(&classed, &self.escalations, table, &spec)
            .expect("classes are normalized to the table");

        let mut proxemic = CostLayer::new(spec);
        for h in &classed {
            let escalated = self.escalations.iter().any(|r| r.human_id == h.id);
            let c_h = if escalated { LETHAL } else { assign_cost_or_adult(h, table) };
            let field = proxemic_field(h, c_h, &cfg.proxemic, &spec);
            for (o, &v) in proxemic.as_mut_slice().iter_mut().zip(field.as_slice()) {
                *o = (*o).max(v);
            }
        }

        let static_costs = self.layers.static_layer.as_slice();
        let sources: Vec<(Cell, u8)> = obstacle
            .as_slice()
            .iter()
            .zip(semantic.as_slice())
            .enumerate()
            .filter_map(|(i, (&o, &s))| {
                let v = o.max(s);
                (v > static_costs[i]).then(|| (spec.cell_at(i), v))
            })
            .collect();
        let mut inflation = inflate_sources(&spec, sources, &cfg.inflation);
        for (o, &v) in inflation.as_mut_slice().iter_mut().zip(self.static_inflated.as_slice()) {
            *o = (*o).max(v);
        }

        let mut composite = inflation.clone();
        for layer in [&self.layers.static_layer, &obstacle, &semantic, &proxemic] {
            for (o, &v) in composite.as_mut_slice().iter_mut().zip(layer.as_slice()) {
                *o = (*o).max(v);
            }
        }
        self.layers.obstacle = obstacle;
        self.layers.semantic = semantic;
        self.layers.proxemic = proxemic;
        self.layers.inflation = inflation;
        self.layers.composite = composite;
    }

    fn replan(&mut self, reason: &str) {
        let Some((goal, _)) = self.scenario.goal() else {
            return;
        };
        let planner = &self.scenario.config().planner;
        let costmap = &self.layers.composite;
        let mut start = self.world.robot.pose.position();
        let mut result = plan_global(costmap, start, goal, planner);
        if result == Err(PlanError::StartBlocked) {
            if let Some(c) = nearest_passable(costmap, start) {
                start = costmap.spec().center_of(c);
                result = plan_global(costmap, start, goal, planner);
            }
        }
        match result {
            Ok(p) => {
                let payload = PlanPayload {
                    reason,
                    total_cost: p.total_cost,
                    length: p.length(),
                    cells: p.cells.iter().map(|c| (c.x, c.y)).collect(),
                    waypoints: &p.waypoints,
                };
                self.record("plan", &payload);
                self.path = Some(p);
                self.last_plan_failure = None;
            }
            Err(e) => {
                self.record("no_path", &NoPathPayload { reason, error: e.to_string() });
                self.path = None;
                self.last_plan_failure = Some(self.world.tick());
            }
        }
    }
}

// True when the beam nearest the bearing of `p` carries past `p`.
fn beam_passes_through(scan: &LaserScan, pose: &Pose, p: Vec2) -> bool {
    let rel = p - pose.position();
    let dist = rel.norm();
    if scan.ranges.is_empty() || dist >= scan.range_max || dist < 1e-9 {
        return false;
    }
    let azimuth = crate::math::normalize_angle(rel.angle() - pose.theta - scan.angle_min);
    let n = scan.ranges.len();
    let i = (azimuth.rem_euclid(std::f64::consts::TAU) / scan.angle_increment).round() as usize % n;
    scan.ranges[i].is_none_or(|r| r > dist)
}

// Closest cell the planner may start from; lowest index on ties.
fn nearest_passable(costmap: &CostLayer, p: Vec2) -> Option<Cell> {
    let spec = costmap.spec();
    costmap
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < INSCRIBED)
        .map(|(i, _)| (spec.center_of(spec.cell_at(i)).distance(p), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| spec.cell_at(i))
}
