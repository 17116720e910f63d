//! Layer builders: static, obstacle, semantic obstacle and proxemic layers,
//! plus the cellwise-maximum combination into a composite.
//!
//! Every builder returns a sparse overlay: cells it does not touch stay 0.

use serde::{Deserialize, Serialize};

use super::grid::{CostLayer, GridRay, GridSpec, OccupancyGrid, FREE, LETHAL};
use super::social::SocialCostTable;
use super::CostmapError;
use crate::behavior::EscalationRecord;
use crate::math::{self, Vec2};
use crate::sim::{HumanEstimate, LaserScan, Pose};

/// Nudge applied along a beam so a hit on a cell boundary marks the struck cell.
const HIT_NUDGE: f64 = 1e-6;

/// Occupied cells become `LETHAL`, everything else `FREE`.
pub fn build_static_layer(occupancy: &OccupancyGrid, spec: &GridSpec) -> Result<CostLayer, CostmapError> {
    if !occupancy.matches(spec) {
        return Err(CostmapError::DimensionMismatch(format!(
            "occupancy is {}x{}, grid is {}x{}",
            occupancy.width, occupancy.height, spec.width, spec.height
        )));
    }
    let cost = occupancy.occupied.iter().map(|&o| if o { LETHAL } else { FREE }).collect();
    CostLayer::from_vec(*spec, cost)
}

/// Marks laser returns as lethal on a fresh layer.
pub fn build_obstacle_layer(scan: &LaserScan, robot_pose: &Pose, spec: &GridSpec) -> CostLayer {
    let mut layer = CostLayer::new(*spec);
    update_obstacle_layer(&mut layer, scan, robot_pose);
    layer
}

/// Raytraces every beam over `layer`: cells between the sensor and the hit
/// are cleared, then every hit cell is marked lethal. Beams without a return
/// clear out to `range_max`. Rays stop at the grid boundary.
pub fn update_obstacle_layer(layer: &mut CostLayer, scan: &LaserScan, robot_pose: &Pose) {
    let spec = *layer.spec();
    let origin = robot_pose.position();
    let mut hits = Vec::new();
    for (i, range) in scan.ranges.iter().enumerate() {
        let dir = Vec2::from_angle(robot_pose.theta + scan.angle_of(i));
        let (reach, hit) = match *range {
            Some(r) => (r, spec.cell_of(origin + dir * (r + HIT_NUDGE))),
            None => (scan.range_max, None),
        };
        for rc in GridRay::new(&spec, origin, dir, reach) {
            if !spec.contains(rc.cell) {
                break;
            }
            if Some(rc.cell) == hit || (range.is_some() && rc.t_enter >= reach) {
                break;
            }
            layer.set(rc.cell, FREE);
        }
        if let Some(c) = hit {
            hits.push(c);
        }
    }
    for c in hits {
        layer.set(c, LETHAL);
    }
}

/// Rasterizes detected humans at their class cost and escalated footprints at
/// `LETHAL`; overlaps resolve by maximum.
pub fn build_semantic_obstacle_layer(
    humans: &[HumanEstimate],
    escalations: &[EscalationRecord],
    table: &SocialCostTable,
    spec: &GridSpec,
) -> Result<CostLayer, CostmapError> {
    let mut layer = CostLayer::new(*spec);
    for h in humans {
        let c_h = table.cost_of(&h.class)?;
        for c in spec.cells_within(h.position, h.radius) {
            layer.raise(c, c_h);
        }
    }
    for e in escalations {
        for c in spec.cells_within(e.anchor, e.footprint_radius) {
            layer.raise(c, LETHAL);
        }
    }
    Ok(layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxemicParams {
    /// Base standard deviation, meters.
    pub sigma: f64,
    /// Growth of the forward standard deviation with speed, seconds/meter.
    pub speed_gain: f64,
}

impl Default for ProxemicParams {
    fn default() -> Self {
        Self { sigma: 0.25, speed_gain: 1.0 }
    }
}

impl ProxemicParams {
    pub fn validate(&self) -> Result<(), CostmapError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !(self.speed_gain >= 0.0 && self.speed_gain.is_finite()) {
            return Err(CostmapError::InvalidParams(format!(
                "proxemic sigma must be > 0 and speed_gain >= 0, got {} and {}",
                self.sigma, self.speed_gain
            )));
        }
        Ok(())
    }
}

/// Proxemic cost of a point at offset (`forward`, `lateral`) in the human frame.
pub fn proxemic_cost(forward: f64, lateral: f64, speed: f64, c_h: u8, p: &ProxemicParams) -> u8 {
    let sigma_y = p.sigma;
    let sigma_x = if forward >= 0.0 { p.sigma * (1.0 + p.speed_gain * speed) } else { p.sigma };
    let q = forward * forward / (2.0 * sigma_x * sigma_x) + lateral * lateral / (2.0 * sigma_y * sigma_y);
    let v = (c_h as f64 * math::exp(-q)).round();
    // below 1 rounds to 0
    v as u8
}

/// Anisotropic Gaussian around one human, stretched along their heading in
/// proportion to their speed.
pub fn proxemic_field(human: &HumanEstimate, c_h: u8, p: &ProxemicParams, spec: &GridSpec) -> CostLayer {
    let mut layer = CostLayer::new(*spec);
    if c_h == 0 {
        return layer;
    }
    let speed = human.speed.max(0.0);
    let sigma_max = p.sigma * (1.0 + p.speed_gain * speed);
    // beyond this radius every cell rounds to 0
    let reach = sigma_max * (2.0 * libm::log(2.0 * c_h as f64)).sqrt() + spec.resolution;
    let heading = if speed > 0.0 { human.heading } else { 0.0 };
    for c in spec.cells_within(human.position, reach) {
        let rel = (spec.center_of(c) - human.position).rotate(-heading);
        let v = proxemic_cost(rel.x, rel.y, speed, c_h, p);
        if v > 0 {
            layer.set(c, v);
        }
    }
    layer
}

/// Cellwise maximum over layers sharing one grid.
pub fn combine(layers: &[&CostLayer]) -> Result<CostLayer, CostmapError> {
    let (first, rest) = layers.split_first().ok_or_else(|| CostmapError::DimensionMismatch("no layers to combine".into()))?;
    let mut out = (*first).clone();
    for l in rest {
        if !l.same_frame(first) {
            return Err(CostmapError::DimensionMismatch("layers do not share a grid".into()));
        }
        for (o, &v) in out.as_mut_slice().iter_mut().zip(l.as_slice()) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}
