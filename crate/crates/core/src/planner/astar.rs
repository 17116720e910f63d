use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Path, PlanError, PlannerConfig};
use crate::costmap::{Cell, CostLayer, INSCRIBED};
use crate::math::Vec2;

const NEIGHBORS: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

// Shrinks the Euclidean heuristic a hair so that floating-point rounding in
// accumulated costs can never make it overestimate.
const HEURISTIC_SCALE: f64 = 1.0 - 1e-6;

/// Cost of one 8-connected move between cells of cost `a` and `b`.
pub fn edge_cost(resolution: f64, diagonal: bool, a: u8, b: u8, weight: f64) -> f64 {
    let step = if diagonal { resolution * std::f64::consts::SQRT_2 } else { resolution };
    step + weight * (resolution / 255.0) * ((a as f64 + b as f64) / 2.0)
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    steps: u32,
    index: usize,
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Open {
    // BinaryHeap is a max-heap: invert so the smallest f pops first, then
    // the larger g, then fewer steps, then the lower index.
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.steps.cmp(&self.steps))
            .then(o.index.cmp(&self.index))
    }
}

/// Minimum-cost 8-connected path from `start` to `goal` over `costmap`.
///
/// Cells at [`INSCRIBED`] or above are impassable. Among equal-cost paths the
/// one with fewer cells wins, then the one whose predecessor has the lower
/// row-major index.
pub fn plan_global(costmap: &CostLayer, start: Vec2, goal: Vec2, cfg: &PlannerConfig) -> Result<Path, PlanError> {
    let spec = *costmap.spec();
    let s = spec.cell_of(start).ok_or(PlanError::OutOfBounds("start"))?;
    let t = spec.cell_of(goal).ok_or(PlanError::OutOfBounds("goal"))?;
    if costmap.get(s) >= INSCRIBED {
        return Err(PlanError::StartBlocked);
    }
    if costmap.get(t) >= INSCRIBED {
        return Err(PlanError::NoPath);
    }
    let n = spec.len();
    let costs = costmap.as_slice();
    let mut g = vec![f64::INFINITY; n];
    let mut steps = vec![u32::MAX; n];
    let mut pred = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let h = |c: Cell| spec.cell_distance(c, t) * HEURISTIC_SCALE;

    let si = spec.index(s);
    let ti = spec.index(t);
    g[si] = 0.0;
    steps[si] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Open { f: h(s), g: 0.0, steps: 0, index: si });

    while let Some(cur) = heap.pop() {
        if closed[cur.index] || cur.g != g[cur.index] || cur.steps != steps[cur.index] {
            continue;
        }
        if cur.index == ti {
            break;
        }
        closed[cur.index] = true;
        let c = spec.cell_at(cur.index);
        let ca = costs[cur.index];
        for (dx, dy) in NEIGHBORS {
            let nc = Cell::new(c.x + dx, c.y + dy);
            if !spec.contains(nc) {
                continue;
            }
            let ni = spec.index(nc);
            let cb = costs[ni];
            if cb >= INSCRIBED {
                continue;
            }
            let ng = cur.g + edge_cost(spec.resolution, dx != 0 && dy != 0, ca, cb, cfg.cost_weight);
            let ns = cur.steps + 1;
            let better = match ng.total_cmp(&g[ni]) {
                Ordering::Less => true,
                Ordering::Equal => (ns, cur.index) < (steps[ni], pred[ni]),
                Ordering::Greater => false,
            };
            if better {
                g[ni] = ng;
                steps[ni] = ns;
                pred[ni] = cur.index;
                // a cheaper route to a settled cell reopens it
                closed[ni] = false;
                heap.push(Open { f: ng + h(nc), g: ng, steps: ns, index: ni });
            }
        }
    }

    if !g[ti].is_finite() {
        return Err(PlanError::NoPath);
    }
    let mut cells = Vec::with_capacity(steps[ti] as usize + 1);
    let mut i = ti;
    loop {
        cells.push(spec.cell_at(i));
        if i == si {
            break;
        }
        i = pred[i];
    }
    cells.reverse();
    let mut waypoints: Vec<Vec2> = cells.iter().map(|&c| spec.center_of(c)).collect();
    if let Some(last) = waypoints.last_mut() {
        *last = goal;
    }
    Ok(Path { cells, waypoints, total_cost: g[ti] })
}

/// True when any path cell from `from_index` on now costs [`INSCRIBED`] or
/// more.
pub fn path_blocked(path: &Path, costmap: &CostLayer, from_index: usize) -> bool {
    path.cells.iter().skip(from_index).any(|&c| costmap.try_get(c).is_none_or(|v| v >= INSCRIBED))
}
