//! Inflation: a hard inscribed band around every cost source followed by an
//! exponential decay out to the influence radius.

use serde::{Deserialize, Serialize};

use super::grid::{Cell, CostLayer, GridSpec};
use super::CostmapError;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InflationParams {
    /// Robot inscribed radius, meters.
    pub inscribed_radius: f64,
    /// Distance beyond which inflation contributes nothing, meters.
    pub inflation_radius: f64,
    /// Exponential decay rate, 1/meters.
    pub decay: f64,
}

impl Default for InflationParams {
    fn default() -> Self {
        Self { inscribed_radius: 0.3, inflation_radius: 1.5, decay: 3.0 }
    }
}

impl InflationParams {
    pub fn validate(&self) -> Result<(), CostmapError> {
        if !(self.inscribed_radius > 0.0 && self.inscribed_radius < self.inflation_radius) {
            return Err(CostmapError::InvalidParams(format!(
                "need 0 < inscribed_radius < inflation_radius, got {} and {}",
                self.inscribed_radius, self.inflation_radius
            )));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(CostmapError::InvalidParams(format!("decay must be positive, got {}", self.decay)));
        }
        Ok(())
    }
}

/// Cost induced at distance `d` from a source cell of cost `source`.
///
/// `source` at the source itself, `source − 1` inside the inscribed radius,
/// `round((source − 1)·exp(−decay·(d − inscribed)))` out to the inflation
/// radius and zero beyond.
pub fn inflation_cost(d: f64, source: u8, p: &InflationParams) -> u8 {
    if source == 0 {
        return 0;
    }
    if d <= 0.0 {
        source
    } else if d <= p.inscribed_radius {
        source - 1
    } else if d <= p.inflation_radius {
        let v = (source - 1) as f64 * math::exp(-p.decay * (d - p.inscribed_radius));
        v.round() as u8
    } else {
        0
    }
}

/// Offsets within the inflation radius together with their distances.
struct Kernel {
    offsets: Vec<(i32, i32, f64)>,
    // costs[source] is filled lazily, one entry per offset
    costs: Vec<Option<Vec<u8>>>,
}

impl Kernel {
    fn new(spec: &GridSpec, p: &InflationParams) -> Self {
        let reach = (p.inflation_radius / spec.resolution).floor() as i32 + 1;
        let origin = Cell::new(0, 0);
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d = spec.cell_distance(origin, Cell::new(dx, dy));
                if d <= p.inflation_radius {
                    offsets.push((dx, dy, d));
                }
            }
        }
        Self { offsets, costs: vec![None; 256] }
    }
}

/// Inflates every nonzero cell of `layer`: each output cell is the maximum of
/// `inflation_cost` over all sources, measured center to center.
pub fn inflate_layer(layer: &CostLayer, p: &InflationParams) -> CostLayer {
    let spec = *layer.spec();
    let sources = layer.as_slice().iter().enumerate().filter(|(_, &v)| v > 0).map(|(i, &v)| (spec.cell_at(i), v));
    inflate_sources(&spec, sources, p)
}

/// Inflates an explicit list of source cells onto an otherwise free layer.
pub fn inflate_sources(spec: &GridSpec, sources: impl IntoIterator<Item = (Cell, u8)>, p: &InflationParams) -> CostLayer {
    let mut out = CostLayer::new(*spec);
    let Kernel { offsets, mut costs } = Kernel::new(spec, p);
    let (w, h) = (spec.width as i32, spec.height as i32);
    for (src, v) in sources {
        if v == 0 {
            continue;
        }
        out.raise(src, v);
        let ring = costs[v as usize].get_or_insert_with(|| offsets.iter().map(|&(_, _, d)| inflation_cost(d, v, p)).collect());
        for (&(dx, dy, _), &c) in offsets.iter().zip(ring.iter()) {
            if c == 0 {
                continue;
            }
            let (x, y) = (src.x + dx, src.y + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                out.raise(Cell::new(x, y), c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::LETHAL;
    use crate::math::Vec2;
    use proptest::prelude::*;

    fn p() -> InflationParams {
        InflationParams::default()
    }

    #[test]
    fn band_edge_is_one_less_than_source() {
        assert_eq!(inflation_cost(0.3, 255, &p()), 254);
        assert_eq!(inflation_cost(0.0, 255, &p()), 255);
        assert_eq!(inflation_cost(0.1, 120, &p()), 119);
    }

    #[test]
    fn decay_value_at_half_cost_distance() {
        // 254·exp(−3·0.231) = 127.008…
        assert_eq!(inflation_cost(0.531, 255, &p()), 127);
    }

    #[test]
    fn zero_beyond_influence() {
        assert_eq!(inflation_cost(1.5000001, 255, &p()), 0);
        assert_eq!(inflation_cost(10.0, 255, &p()), 0);
    }

    #[test]
    fn all_zero_layer_stays_zero() {
        let spec = GridSpec::new(9, 7, 0.1, Vec2::ZERO).unwrap();
        let out = inflate_layer(&CostLayer::new(spec), &p());
        assert!(out.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn human_source_inflates_below_lethal_source() {
        let spec = GridSpec::new(21, 21, 0.1, Vec2::ZERO).unwrap();
        let mut lethal = CostLayer::new(spec);
        lethal.set(Cell::new(10, 10), LETHAL);
        let mut human = CostLayer::new(spec);
        human.set(Cell::new(10, 10), 120);
        let (a, b) = (inflate_layer(&lethal, &p()), inflate_layer(&human, &p()));
        assert_eq!(b.get(Cell::new(10, 10)), 120);
        assert_eq!(b.get(Cell::new(13, 10)), 119);
        for c in spec.cells() {
            assert!(b.get(c) <= a.get(c));
            if a.get(c) >= 3 {
                assert!(b.get(c) < a.get(c), "cell {c:?}");
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut q = p();
        q.inscribed_radius = 2.0;
        assert!(q.validate().is_err());
        let mut q = p();
        q.decay = 0.0;
        assert!(q.validate().is_err());
    }

    proptest! {
        #[test]
        fn cost_monotone_in_distance(d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, src in 1u8..=255, ins in 0.05f64..0.6, extra in 0.1f64..2.0, decay in 0.1f64..10.0) {
            let q = InflationParams { inscribed_radius: ins, inflation_radius: ins + extra, decay };
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(inflation_cost(lo, src, &q) >= inflation_cost(hi, src, &q));
        }

        #[test]
        fn cost_monotone_in_source(d in 0.0f64..3.0, s1 in 1u8..=255, s2 in 1u8..=255) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(inflation_cost(d, lo, &p()) <= inflation_cost(d, hi, &p()));
        }
    }
}
