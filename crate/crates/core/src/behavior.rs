//! Interaction state machine: turn toward an unexpected touch, hold after a
//! contact while navigating, and escalate a human who keeps blocking the path
//! past the proximity filter's timeout.

use serde::{Deserialize, Serialize};

use crate::costmap::{CostmapError, GridSpec, SocialCostTable, ADULT};
use crate::math::{self, Vec2};
use crate::planner::Path;
use crate::proximity::FilterEvent;
use crate::sim::{HumanEstimate, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum FsmState {
    Idle,
    /// Rotating in place toward a world-frame heading.
    TurnToContact { target_heading: f64 },
    Navigate,
    ContactHold { human: Option<u32> },
    Escalated,
    GoalReached,
}

impl FsmState {
    pub fn name(&self) -> &'static str {
        match self {
            FsmState::Idle => "idle",
            FsmState::TurnToContact { .. } => "turn_to_contact",
            FsmState::Navigate => "navigate",
            FsmState::ContactHold { .. } => "contact_hold",
            FsmState::Escalated => "escalated",
            FsmState::GoalReached => "goal_reached",
        }
    }
}

/// A human whose footprint is marked occupied after blocking the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscalationRecord {
    pub human_id: u32,
    /// Human position when escalated.
    pub anchor: Vec2,
    pub footprint_radius: f64,
    pub created_tick: u64,
    /// The record is released once the human is seen farther than this from
    /// the anchor.
    pub release_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    /// Heading error below which turning toward a contact is done, radians.
    pub turn_tolerance: f64,
    /// Release radius of escalation records, meters.
    pub release_radius: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self { turn_tolerance: 0.1, release_radius: 0.5 }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.turn_tolerance > 0.0) || !(self.release_radius > 0.0) {
            return Err(format!(
                "turn_tolerance and release_radius must be positive, got {} and {}",
                self.turn_tolerance, self.release_radius
            ));
        }
        Ok(())
    }
}

/// Everything the state machine looks at on one tick.
#[derive(Debug, Clone)]
pub struct FsmInputs<'a> {
    pub tick: u64,
    pub filter_events: &'a [FilterEvent],
    pub robot_pose: Pose,
    pub detections: &'a [HumanEstimate],
    /// Detected human the robot is touching, if any.
    pub contact_human: Option<u32>,
    pub has_goal: bool,
    pub goal_reached: bool,
    /// Remaining path crosses an impassable cell.
    pub path_blocked: bool,
    /// Detected human standing on the remaining path.
    pub blocking_human: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "directive", rename_all = "snake_case")]
pub enum Directive {
    /// Rotate in place at this rate, rad/s.
    Rotate { omega: f64 },
    Replan,
    Escalate(EscalationRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsmOutput {
    pub state: FsmState,
    pub directives: Vec<Directive>,
    /// Short reason for a transition, empty when the state is unchanged.
    pub trigger: &'static str,
}

/// One state machine update.
pub fn fsm_step(state: &FsmState, inputs: &FsmInputs, cfg: &BehaviorConfig, omega_max: f64) -> FsmOutput {
    let contact = inputs.filter_events.iter().find_map(|e| match e {
        FilterEvent::ContactStarted { azimuth, .. } => Some(*azimuth),
        _ => None,
    });
    let timeout = inputs.filter_events.contains(&FilterEvent::TimeoutExpired);
    let stay = |directives| FsmOutput { state: *state, directives, trigger: "" };
    let go = |s: FsmState, directives, trigger| FsmOutput { state: s, directives, trigger };

    match *state {
        FsmState::Idle => {
            if let Some(az) = contact {
                let target = math::normalize_angle(inputs.robot_pose.theta + az);
                return go(FsmState::TurnToContact { target_heading: target }, vec![], "contact");
            }
            if inputs.has_goal && !inputs.goal_reached {
                return go(FsmState::Navigate, vec![Directive::Replan], "goal");
            }
            stay(vec![])
        }
        FsmState::TurnToContact { target_heading } => {
            let err = math::normalize_angle(target_heading - inputs.robot_pose.theta);
            if err.abs() < cfg.turn_tolerance {
                return go(FsmState::Idle, vec![], "facing_contact");
            }
            stay(vec![Directive::Rotate { omega: omega_max.copysign(err) }])
        }
        FsmState::Navigate => {
            if inputs.goal_reached {
                return go(FsmState::GoalReached, vec![], "goal_reached");
            }
            if contact.is_some() {
                return go(FsmState::ContactHold { human: inputs.contact_human }, vec![], "contact");
            }
            stay(vec![])
        }
        FsmState::ContactHold { .. } => {
            let blocked = inputs.blocking_human.is_some() || inputs.path_blocked;
            if timeout {
                if !blocked {
                    return go(FsmState::Navigate, vec![], "timeout_clear");
                }
                let mut directives = Vec::new();
                if let Some(id) = inputs.blocking_human {
                    if let Some(h) = inputs.detections.iter().find(|h| h.id == id) {
                        directives.push(Directive::Escalate(EscalationRecord {
                            human_id: id,
                            anchor: h.position,
                            footprint_radius: h.radius,
                            created_tick: inputs.tick,
                            release_radius: cfg.release_radius,
                        }));
                    }
                }
                directives.push(Directive::Replan);
                return go(FsmState::Escalated, directives, "timeout_blocked");
            }
            if !blocked {
                return go(FsmState::Navigate, vec![], "path_clear");
            }
            stay(vec![])
        }
        FsmState::Escalated => go(FsmState::Navigate, vec![], "replanned"),
        FsmState::GoalReached => stay(vec![]),
    }
}

/// Drops records whose human is currently seen farther than the release
/// radius from the anchor. Humans out of view keep their record.
pub fn maintain_escalations(records: &[EscalationRecord], detections: &[HumanEstimate]) -> Vec<EscalationRecord> {
    records
        .iter()
        .filter(|r| match detections.iter().find(|h| h.id == r.human_id) {
            Some(h) => h.position.distance(r.anchor) <= r.release_radius,
            None => true,
        })
        .copied()
        .collect()
}

/// Social cost of a detected human's class.
pub fn assign_cost(detection: &HumanEstimate, table: &SocialCostTable) -> Result<u8, CostmapError> {
    table.cost_of(&detection.class)
}

/// Like [`assign_cost`], but a human whose class is unknown gets the adult
/// cost instead of an error.
pub fn assign_cost_or_adult(detection: &HumanEstimate, table: &SocialCostTable) -> u8 {
    assign_cost(detection, table).unwrap_or_else(|_| {
        log::warn!("human {} has unknown class {:?}; using adult cost", detection.id, detection.class);
        table.get(ADULT).unwrap_or(SocialCostTable::default().get(ADULT).unwrap_or(120))
    })
}

/// Detected human whose disc, grown by `clearance`, covers a path cell at or
/// after `from_index`. The first such cell decides; ties go to the lowest id.
pub fn find_blocking_human(
    path: &Path,
    from_index: usize,
    detections: &[HumanEstimate],
    clearance: f64,
    spec: &GridSpec,
) -> Option<(u32, usize)> {
    for (i, &c) in path.cells.iter().enumerate().skip(from_index) {
        let p = spec.center_of(c);
        let hit = detections.iter().filter(|h| h.position.distance(p) <= h.radius + clearance).map(|h| h.id).min();
        if let Some(id) = hit {
            return Some((id, i));
        }
    }
    None
}

/// Index of the path cell closest to `p` (first on ties).
pub fn nearest_path_index(path: &Path, p: Vec2, spec: &GridSpec) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in path.cells.iter().enumerate() {
        let d = spec.center_of(c).distance(p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::Cell;
    use std::f64::consts::PI;

    fn human(id: u32, x: f64, y: f64) -> HumanEstimate {
        HumanEstimate { id, position: Vec2::new(x, y), heading: 0.0, speed: 0.0, radius: 0.3, class: "adult".into() }
    }

    fn inputs<'a>(events: &'a [FilterEvent], dets: &'a [HumanEstimate]) -> FsmInputs<'a> {
        FsmInputs {
            tick: 7,
            filter_events: events,
            robot_pose: Pose::default(),
            detections: dets,
            contact_human: None,
            has_goal: true,
            goal_reached: false,
            path_blocked: false,
            blocking_human: None,
        }
    }

    const TOUCH_BEHIND: [FilterEvent; 1] = [FilterEvent::ContactStarted { azimuth: PI, magnitude: 6.0 }];

    #[test]
    fn idle_touch_turns_toward_contact() {
        let cfg = BehaviorConfig::default();
        let mut inp = inputs(&TOUCH_BEHIND, &[]);
        inp.has_goal = false;
        let out = fsm_step(&FsmState::Idle, &inp, &cfg, 1.5);
        let FsmState::TurnToContact { target_heading } = out.state else { panic!("{:?}", out.state) };
        assert!((target_heading.abs() - PI).abs() < 1e-12);

        // rotating at a fixed rate strictly shrinks the error until done
        let mut state = out.state;
        let mut pose = Pose::default();
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let mut inp = inputs(&[], &[]);
            inp.has_goal = false;
            inp.robot_pose = pose;
            let out = fsm_step(&state, &inp, &cfg, 1.5);
            state = out.state;
            match out.directives.as_slice() {
                [Directive::Rotate { omega }] => {
                    let err = math::normalize_angle(target_heading - pose.theta).abs();
                    assert!(err < last);
                    last = err;
                    pose = Pose::new(0.0, 0.0, pose.theta + omega * 0.05);
                }
                [] => break,
                d => panic!("{d:?}"),
            }
        }
        assert_eq!(state, FsmState::Idle);
        assert!(math::normalize_angle(target_heading - pose.theta).abs() < cfg.turn_tolerance);
    }

    #[test]
    fn idle_with_goal_starts_navigating() {
        let out = fsm_step(&FsmState::Idle, &inputs(&[], &[]), &BehaviorConfig::default(), 1.5);
        assert_eq!(out.state, FsmState::Navigate);
        assert_eq!(out.directives, vec![Directive::Replan]);
    }

    #[test]
    fn block_sequence_escalates() {
        let cfg = BehaviorConfig::default();
        let dets = [human(3, 2.0, 0.0)];
        let touch = [FilterEvent::ContactStarted { azimuth: 0.0, magnitude: 6.0 }];
        let mut inp = inputs(&touch, &dets);
        inp.contact_human = Some(3);
        let s1 = fsm_step(&FsmState::Navigate, &inp, &cfg, 1.5).state;
        assert_eq!(s1, FsmState::ContactHold { human: Some(3) });

        let mut inp = inputs(&[], &dets);
        inp.blocking_human = Some(3);
        assert_eq!(fsm_step(&s1, &inp, &cfg, 1.5).state, s1);

        let timeout = [FilterEvent::TimeoutExpired];
        let mut inp = inputs(&timeout, &dets);
        inp.blocking_human = Some(3);
        let out = fsm_step(&s1, &inp, &cfg, 1.5);
        assert_eq!(out.state, FsmState::Escalated);
        let rec = EscalationRecord { human_id: 3, anchor: Vec2::new(2.0, 0.0), footprint_radius: 0.3, created_tick: 7, release_radius: 0.5 };
        assert_eq!(out.directives, vec![Directive::Escalate(rec), Directive::Replan]);
        assert_eq!(fsm_step(&out.state, &inputs(&[], &dets), &cfg, 1.5).state, FsmState::Navigate);
    }

    #[test]
    fn yield_sequence_never_escalates() {
        let cfg = BehaviorConfig::default();
        let hold = FsmState::ContactHold { human: Some(3) };
        let out = fsm_step(&hold, &inputs(&[], &[human(3, 2.0, 1.0)]), &cfg, 1.5);
        assert_eq!(out.state, FsmState::Navigate);
        assert!(out.directives.is_empty());
    }

    #[test]
    fn contact_alone_does_not_escalate() {
        let cfg = BehaviorConfig::default();
        let touch = [FilterEvent::ContactStarted { azimuth: 0.0, magnitude: 6.0 }];
        let out = fsm_step(&FsmState::Navigate, &inputs(&touch, &[]), &cfg, 1.5);
        assert!(out.directives.iter().all(|d| !matches!(d, Directive::Escalate(_))));
    }

    #[test]
    fn navigate_reaches_goal() {
        let mut inp = inputs(&[], &[]);
        inp.goal_reached = true;
        assert_eq!(fsm_step(&FsmState::Navigate, &inp, &BehaviorConfig::default(), 1.5).state, FsmState::GoalReached);
    }

    #[test]
    fn escalation_release() {
        let rec = EscalationRecord { human_id: 1, anchor: Vec2::ZERO, footprint_radius: 0.3, created_tick: 0, release_radius: 0.5 };
        assert_eq!(maintain_escalations(&[rec], &[human(1, 0.1, 0.0)]), vec![rec]);
        assert!(maintain_escalations(&[rec], &[human(1, 1.5, 0.0)]).is_empty());
        assert_eq!(maintain_escalations(&[rec], &[]), vec![rec]);
        assert!(maintain_escalations(&[], &[]).is_empty());
    }

    #[test]
    fn class_costs() {
        let t = SocialCostTable::default();
        let mut h = human(1, 0.0, 0.0);
        assert_eq!(assign_cost(&h, &t).unwrap(), 120);
        h.class = "vulnerable".into();
        assert_eq!(assign_cost(&h, &t).unwrap(), 200);
        h.class = "robot".into();
        assert!(assign_cost(&h, &t).is_err());
        assert_eq!(assign_cost_or_adult(&h, &t), 120);
    }

    #[test]
    fn blocking_human_is_first_on_path() {
        let spec = GridSpec::new(50, 10, 0.1, Vec2::ZERO).unwrap();
        let cells: Vec<Cell> = (0..50).map(|x| Cell::new(x, 5)).collect();
        let path = Path { waypoints: cells.iter().map(|&c| spec.center_of(c)).collect(), cells, total_cost: 0.0 };
        let dets = [human(9, 4.0, 0.55), human(2, 3.0, 0.55), human(1, 3.0, 0.55)];
        assert_eq!(find_blocking_human(&path, 0, &dets, 0.3, &spec).map(|b| b.0), Some(1));
        assert_eq!(find_blocking_human(&path, 47, &dets, 0.3, &spec), None);
    }
}
