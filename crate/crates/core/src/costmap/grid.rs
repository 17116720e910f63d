//! Metric grid frame, cost layers and grid ray traversal.

use serde::{Deserialize, Serialize};

use super::CostmapError;
use crate::math::Vec2;

/// Highest cost: occupied cell.
pub const LETHAL: u8 = 255;
/// One less than lethal: the robot center may not enter.
pub const INSCRIBED: u8 = 254;
pub const FREE: u8 = 0;

/// Integer cell coordinates. May lie outside a grid (ray traversal yields
/// such cells before the caller bounds-checks them).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// Dimensions and placement of a grid in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    /// World coordinates of the outer corner of cell (0, 0).
    pub origin: Vec2,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Vec2) -> Result<Self, CostmapError> {
        if width == 0 || height == 0 {
            return Err(CostmapError::InvalidSpec(format!("grid must be at least 1x1, got {width}x{height}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(CostmapError::InvalidSpec(format!("resolution must be positive, got {resolution}")));
        }
        if width > i32::MAX as usize || height > i32::MAX as usize {
            return Err(CostmapError::InvalidSpec("grid too large".into()));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(CostmapError::InvalidSpec("origin must be finite".into()));
        }
        Ok(Self { width, height, resolution, origin })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    /// Cell containing `p`, whether or not it is inside the grid.
    pub fn cell_of_unbounded(&self, p: Vec2) -> Cell {
        let gx = ((p.x - self.origin.x) / self.resolution).floor();
        let gy = ((p.y - self.origin.y) / self.resolution).floor();
        Cell::new(gx.clamp(i32::MIN as f64, i32::MAX as f64) as i32, gy.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
    }

    /// Cell containing `p`, or `None` when `p` lies outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<Cell> {
        let c = self.cell_of_unbounded(p);
        self.contains(c).then_some(c)
    }

    pub fn center_of(&self, c: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (c.x as f64 + 0.5) * self.resolution,
            self.origin.y + (c.y as f64 + 0.5) * self.resolution,
        )
    }

    /// Row-major index; `c` must be in bounds.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.contains(c));
        c.y as usize * self.width + c.x as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |i| self.cell_at(i))
    }

    /// Euclidean distance between the centers of two cells.
    pub fn cell_distance(&self, a: Cell, b: Cell) -> f64 {
        let dx = (a.x - b.x) as f64;
        let dy = (a.y - b.y) as f64;
        (dx * dx + dy * dy).sqrt() * self.resolution
    }

    /// In-bounds cells whose centers lie within `radius` of `p` (with a
    /// 1e-9 m allowance so discs centered on cell centers rasterize exactly).
    pub fn cells_within(&self, p: Vec2, radius: f64) -> Vec<Cell> {
        let lo = self.cell_of_unbounded(Vec2::new(p.x - radius, p.y - radius));
        let hi = self.cell_of_unbounded(Vec2::new(p.x + radius, p.y + radius));
        let mut out = Vec::new();
        for y in lo.y.max(0)..=hi.y.min(self.height as i32 - 1) {
            for x in lo.x.max(0)..=hi.x.min(self.width as i32 - 1) {
                let c = Cell::new(x, y);
                if self.center_of(c).distance(p) <= radius + 1e-9 {
                    out.push(c);
                }
            }
        }
        out
    }
}

/// Boolean occupancy over a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn free(width: usize, height: usize) -> Self {
        Self { width, height, occupied: vec![false; width * height] }
    }

    /// Parses rows of text where `#` marks an occupied cell and `.` a free one.
    /// Row `i` of the text is grid row `y = i`.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, CostmapError> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().chars().count()).unwrap_or(0);
        let mut occupied = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(CostmapError::DimensionMismatch(format!(
                    "row {y} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for ch in row.chars() {
                match ch {
                    '#' => occupied.push(true),
                    '.' => occupied.push(false),
                    other => return Err(CostmapError::InvalidSpec(format!("row {y}: unexpected character {other:?}"))),
                }
            }
        }
        Ok(Self { width, height, occupied })
    }

    pub fn matches(&self, spec: &GridSpec) -> bool {
        self.width == spec.width && self.height == spec.height && self.occupied.len() == spec.len()
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        c.x >= 0
            && c.y >= 0
            && (c.x as usize) < self.width
            && (c.y as usize) < self.height
            && self.occupied[c.y as usize * self.width + c.x as usize]
    }

    pub fn set(&mut self, c: Cell, value: bool) {
        let i = c.y as usize * self.width + c.x as usize;
        self.occupied[i] = value;
    }
}

/// A grid of integer costs in [0, 255].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostLayer {
    spec: GridSpecKey,
    cost: Vec<u8>,
}

// GridSpec holds floats, so equality goes through the bit patterns.
#[derive(Debug, Clone, Copy)]
struct GridSpecKey(GridSpec);

impl PartialEq for GridSpecKey {
    fn eq(&self, o: &Self) -> bool {
        let (a, b) = (&self.0, &o.0);
        a.width == b.width
            && a.height == b.height
            && a.resolution.to_bits() == b.resolution.to_bits()
            && a.origin.x.to_bits() == b.origin.x.to_bits()
            && a.origin.y.to_bits() == b.origin.y.to_bits()
    }
}

impl Eq for GridSpecKey {}

impl CostLayer {
    /// An all-free layer.
    pub fn new(spec: GridSpec) -> Self {
        Self { spec: GridSpecKey(spec), cost: vec![FREE; spec.len()] }
    }

    pub fn from_vec(spec: GridSpec, cost: Vec<u8>) -> Result<Self, CostmapError> {
        if cost.len() != spec.len() {
            return Err(CostmapError::DimensionMismatch(format!(
                "{} costs for a {}x{} grid",
                cost.len(),
                spec.width,
                spec.height
            )));
        }
        Ok(Self { spec: GridSpecKey(spec), cost })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec.0
    }

    pub fn same_frame(&self, other: &CostLayer) -> bool {
        self.spec == other.spec
    }

    /// Cost of an in-bounds cell.
    pub fn get(&self, c: Cell) -> u8 {
        self.cost[self.spec.0.index(c)]
    }

    /// Cost of a cell, or `None` outside the grid.
    pub fn try_get(&self, c: Cell) -> Option<u8> {
        self.spec.0.contains(c).then(|| self.get(c))
    }

    pub fn set(&mut self, c: Cell, v: u8) {
        let i = self.spec.0.index(c);
        self.cost[i] = v;
    }

    /// Raises a cell to `v` if `v` is higher.
    pub fn raise(&mut self, c: Cell, v: u8) {
        let i = self.spec.0.index(c);
        if v > self.cost[i] {
            self.cost[i] = v;
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.cost
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.cost
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.cost
    }

    /// Row `y` of the layer.
    pub fn row(&self, y: usize) -> &[u8] {
        let w = self.spec.0.width;
        &self.cost[y * w..(y + 1) * w]
    }
}

/// One cell visited by a ray, with the ray distance at which it is entered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCell {
    pub cell: Cell,
    pub t_enter: f64,
}

/// Cells crossed by a ray, in order, using the Amanatides–Woo traversal.
/// Unbounded: cells outside the grid are yielded too.
pub struct GridRay {
    cell: Cell,
    step: (i32, i32),
    t_next: (f64, f64),
    t_delta: (f64, f64),
    t: f64,
    max_t: f64,
    started: bool,
}

impl GridRay {
    /// Ray from `from` along the unit vector `dir`, up to distance `max_t`.
    pub fn new(spec: &GridSpec, from: Vec2, dir: Vec2, max_t: f64) -> Self {
        let res = spec.resolution;
        let gx = (from.x - spec.origin.x) / res;
        let gy = (from.y - spec.origin.y) / res;
        let cell = spec.cell_of_unbounded(from);
        let axis = |g: f64, c: i32, d: f64| -> (i32, f64, f64) {
            if d > 0.0 {
                (1, ((c as f64 + 1.0) - g) * res / d, res / d)
            } else if d < 0.0 {
                (-1, (g - c as f64) * res / -d, res / -d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (sx, nx, dx) = axis(gx, cell.x, dir.x);
        let (sy, ny, dy) = axis(gy, cell.y, dir.y);
        Self { cell, step: (sx, sy), t_next: (nx, ny), t_delta: (dx, dy), t: 0.0, max_t, started: false }
    }
}

impl Iterator for GridRay {
    type Item = RayCell;

    fn next(&mut self) -> Option<RayCell> {
        if !self.started {
            self.started = true;
            return Some(RayCell { cell: self.cell, t_enter: 0.0 });
        }
        let (t, horizontal) = if self.t_next.0 <= self.t_next.1 {
            (self.t_next.0, true)
        } else {
            (self.t_next.1, false)
        };
        if !t.is_finite() || t > self.max_t {
            return None;
        }
        if horizontal {
            self.cell.x += self.step.0;
            self.t_next.0 += self.t_delta.0;
        } else {
            self.cell.y += self.step.1;
            self.t_next.1 += self.t_delta.1;
        }
        self.t = t;
        Some(RayCell { cell: self.cell, t_enter: self.t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(w: usize, h: usize, res: f64) -> GridSpec {
        GridSpec::new(w, h, res, Vec2::new(-1.0, 2.5)).unwrap()
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(GridSpec::new(0, 3, 0.1, Vec2::ZERO).is_err());
        assert!(GridSpec::new(3, 3, 0.0, Vec2::ZERO).is_err());
        assert!(GridSpec::new(3, 3, -1.0, Vec2::ZERO).is_err());
    }

    #[test]
    fn cell_lookup_outside_is_none() {
        let s = spec(4, 3, 0.5);
        assert_eq!(s.cell_of(Vec2::new(-1.01, 2.6)), None);
        assert_eq!(s.cell_of(Vec2::new(-0.99, 2.6)), Some(Cell::new(0, 0)));
        assert_eq!(s.cell_of(Vec2::new(0.99, 3.99)), Some(Cell::new(3, 2)));
        assert_eq!(s.cell_of(Vec2::new(1.0, 3.0)), None);
    }

    #[test]
    fn ray_along_x_visits_consecutive_cells() {
        let s = GridSpec::new(20, 1, 0.1, Vec2::ZERO).unwrap();
        let cells: Vec<_> = GridRay::new(&s, Vec2::new(0.05, 0.05), Vec2::new(1.0, 0.0), 1.0).collect();
        assert_eq!(cells.len(), 11);
        for (i, rc) in cells.iter().enumerate() {
            assert_eq!(rc.cell, Cell::new(i as i32, 0));
        }
        assert!((cells[10].t_enter - 0.95).abs() < 1e-12);
    }

    #[test]
    fn occupancy_rows_parse() {
        let g = OccupancyGrid::from_rows(&["..#", "#.."]).unwrap();
        assert!(g.is_occupied(Cell::new(2, 0)));
        assert!(g.is_occupied(Cell::new(0, 1)));
        assert!(!g.is_occupied(Cell::new(1, 1)));
        assert!(OccupancyGrid::from_rows(&["..", "..."]).is_err());
        assert!(OccupancyGrid::from_rows(&["x."]).is_err());
    }

    proptest! {
        #[test]
        fn center_round_trips(w in 1usize..200, h in 1usize..200, res in 0.01f64..2.0, ox in -50.0f64..50.0, oy in -50.0f64..50.0, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let s = GridSpec::new(w, h, res, Vec2::new(ox, oy)).unwrap();
            let c = Cell::new(((w - 1) as f64 * fx) as i32, ((h - 1) as f64 * fy) as i32);
            prop_assert_eq!(s.cell_of(s.center_of(c)), Some(c));
            prop_assert_eq!(s.cell_at(s.index(c)), c);
        }

        #[test]
        fn ray_steps_are_four_connected(angle in 0.0f64..std::f64::consts::TAU, sx in 0.0f64..10.0, sy in 0.0f64..10.0) {
            let s = GridSpec::new(100, 100, 0.1, Vec2::ZERO).unwrap();
            let from = Vec2::new(sx, sy);
            let cells: Vec<_> = GridRay::new(&s, from, Vec2::from_angle(angle), 3.0).collect();
            prop_assert_eq!(cells[0].cell, s.cell_of_unbounded(from));
            for w in cells.windows(2) {
                let d = (w[0].cell.x - w[1].cell.x).abs() + (w[0].cell.y - w[1].cell.y).abs();
                prop_assert_eq!(d, 1);
                prop_assert!(w[1].t_enter >= w[0].t_enter);
            }
        }
    }
}
