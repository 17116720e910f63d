//! Layered costmaps.
//!
//! Costs are bytes: [`LETHAL`] (255) for occupied cells, [`INSCRIBED`] (254)
//! where the robot center cannot go, and lower values for progressively
//! discouraged but traversable space. Layers are built independently as
//! sparse overlays and merged with [`combine`] (cellwise maximum).
//!
//! Detected humans are written by the semantic obstacle layer at a permeable
//! per-class cost; the same inflation and proxemic formulas then spread that
//! cost outward instead of the lethal one.

mod grid;
mod inflation;
mod layers;
pub mod pgm;
mod social;

pub use grid::{Cell, CostLayer, GridRay, GridSpec, OccupancyGrid, RayCell, FREE, INSCRIBED, LETHAL};
pub use inflation::{inflate_layer, inflate_sources, inflation_cost, InflationParams};
pub use layers::{
    build_obstacle_layer, build_semantic_obstacle_layer, build_static_layer, combine, proxemic_cost, proxemic_field,
    update_obstacle_layer, ProxemicParams,
};
pub use social::{SocialCostTable, ADULT, STAFF, VULNERABLE};

#[derive(Debug, thiserror::Error)]
pub enum CostmapError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown social class {0:?}")]
    UnknownClass(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
}
