//! Scenario documents: parsing, defaults and validation.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorConfig;
use crate::costmap::{pgm, GridSpec, InflationParams, OccupancyGrid, ProxemicParams, SocialCostTable};
use crate::math::Vec2;
use crate::planner::PlannerConfig;
use crate::proximity::FilterConfig;
use crate::sim::{HumanAgent, PolicyKind, Pose, RobotParams, SensorConfig, World, WorldConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unknown scenario {0:?}")]
    Unknown(String),
}

fn invalid(field: impl Into<String>, reason: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.to_string() }
}

/// Grid frame and static occupancy. Exactly one of `rows` and `pgm` is given.
///
/// In `rows`, string `i` is the cell row `y = i`, `#` occupied and `.` free.
/// A `pgm` path is resolved against the scenario file's directory; pixels
/// equal to 255 are occupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub resolution: f64,
    #[serde(default)]
    pub origin: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pgm: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDoc {
    pub pose: Pose,
    #[serde(default)]
    pub params: RobotParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalDoc {
    pub x: f64,
    pub y: f64,
    /// Defaults to the planner's goal tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

fn default_radius() -> f64 {
    0.3
}

fn default_class() -> String {
    crate::costmap::ADULT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanDoc {
    pub id: u32,
    pub pose: Pose,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_class")]
    pub class: String,
    pub policy: PolicyKind,
}

/// Named axis-aligned rectangle, used to report which exit the robot took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    pub min: Vec2,
    pub max: Vec2,
}

impl Region {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub inflation: InflationParams,
    pub proxemic: ProxemicParams,
    pub filter: FilterConfig,
    pub planner: PlannerConfig,
    pub behavior: BehaviorConfig,
    pub sensors: SensorConfig,
    pub social_costs: SocialCostTable,
    pub world: WorldConfig,
}

fn default_max_ticks() -> u64 {
    3000
}

/// A scenario file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    pub grid: GridDoc,
    pub robot: RobotDoc,
    #[serde(default)]
    pub goal: Option<GoalDoc>,
    #[serde(default)]
    pub humans: Vec<HumanDoc>,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub config: StackConfig,
    pub seed: u64,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
}

/// A validated scenario. The grid is always held inline so the document can
/// be embedded in a log and reloaded without its surroundings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub spec: GridSpec,
    pub occupancy: OccupancyGrid,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn seed(&self) -> u64 {
        self.doc.seed
    }

    pub fn config(&self) -> &StackConfig {
        &self.doc.config
    }

    /// Goal point and tolerance, if the scenario has a goal.
    pub fn goal(&self) -> Option<(Vec2, f64)> {
        self.doc.goal.map(|g| (Vec2::new(g.x, g.y), g.tol.unwrap_or(self.doc.config.planner.goal_tolerance)))
    }

    /// Filter settings with the robot's speed limits filled in.
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            max_speed: self.doc.robot.params.max_speed,
            max_turn_rate: self.doc.robot.params.max_turn_rate,
            ..self.doc.config.filter
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.doc.seed = seed;
        self
    }

    pub fn with_max_ticks(mut self, max_ticks: u64) -> Self {
        self.doc.max_ticks = max_ticks;
        self
    }

    /// Builds the initial world.
    pub fn build_world(&self) -> Result<World, ScenarioError> {
        let humans = self
            .doc
            .humans
            .iter()
            .map(|h| HumanAgent::new(h.id, h.pose, h.radius, h.class.clone(), h.policy.clone()))
            .collect();
        let cfg = &self.doc.config;
        World::new(
            self.spec,
            self.occupancy.clone(),
            self.doc.robot.pose,
            self.doc.robot.params,
            humans,
            cfg.sensors,
            cfg.world,
            self.doc.seed,
        )
        .map_err(|e| match e {
            crate::sim::SimError::Invalid { field, reason } => ScenarioError::Invalid { field, reason },
        })
    }
}

/// Parses and validates a scenario. Relative PGM references resolve against
/// `base_dir` (or the working directory when `None`).
pub fn load_scenario_from(source: &str, base_dir: Option<&FsPath>) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(source);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    validate(doc, base_dir)
}

/// Parses and validates a scenario given as text.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    load_scenario_from(source, None)
}

/// Parses and validates a scenario from a JSON value.
pub fn load_scenario_value(value: serde_json::Value) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    validate(doc, None)
}

/// Reads a scenario file.
pub fn load_scenario_file(path: &FsPath) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    load_scenario_from(&text, path.parent())
}

fn read_grid(grid: &GridDoc, base_dir: Option<&FsPath>) -> Result<OccupancyGrid, ScenarioError> {
    match (&grid.rows, &grid.pgm) {
        (Some(rows), None) => {
            if rows.is_empty() {
                return Err(invalid("grid.rows", "no rows"));
            }
            OccupancyGrid::from_rows(rows).map_err(|e| invalid("grid.rows", e))
        }
        (None, Some(file)) => {
            let path: PathBuf = match base_dir {
                Some(d) => d.join(file),
                None => PathBuf::from(file),
            };
            let bytes = std::fs::read(&path).map_err(|e| invalid("grid.pgm", format!("{}: {e}", path.display())))?;
            Ok(pgm::decode_pgm(&bytes).map_err(|e| invalid("grid.pgm", e))?.to_occupancy())
        }
        _ => Err(invalid("grid", "exactly one of rows and pgm is required")),
    }
}

fn occupancy_rows(occ: &OccupancyGrid) -> Vec<String> {
    occ.occupied.chunks(occ.width).map(|r| r.iter().map(|&o| if o { '#' } else { '.' }).collect()).collect()
}

fn validate(mut doc: ScenarioDoc, base_dir: Option<&FsPath>) -> Result<Scenario, ScenarioError> {
    let occupancy = read_grid(&doc.grid, base_dir)?;
    for (field, given, actual) in [("grid.width", doc.grid.width, occupancy.width), ("grid.height", doc.grid.height, occupancy.height)] {
        if let Some(g) = given {
            if g != actual {
                return Err(invalid(field, format!("declared {g} but the map has {actual}")));
            }
        }
    }
    let spec = GridSpec::new(occupancy.width, occupancy.height, doc.grid.resolution, doc.grid.origin).map_err(|e| invalid("grid", e))?;
    doc.grid.rows = Some(occupancy_rows(&occupancy));
    doc.grid.pgm = None;
    doc.grid.width = None;
    doc.grid.height = None;

    let cfg = &doc.config;
    cfg.inflation.validate().map_err(|e| invalid("config.inflation", e))?;
    cfg.proxemic.validate().map_err(|e| invalid("config.proxemic", e))?;
    cfg.planner.validate().map_err(|e| invalid("config.planner", e))?;
    cfg.behavior.validate().map_err(|e| invalid("config.behavior", e))?;
    cfg.sensors.validate().map_err(|e| invalid("config.sensors", e))?;
    if !(cfg.world.dt > 0.0 && cfg.world.dt.is_finite()) || !(cfg.world.human_max_speed > 0.0) {
        return Err(invalid("config.world", "dt and human_max_speed must be positive"));
    }
    if doc.max_ticks == 0 {
        return Err(invalid("max_ticks", "must be at least 1"));
    }
    if let Some(g) = doc.goal {
        if spec.cell_of(Vec2::new(g.x, g.y)).is_none() {
            return Err(invalid("goal", "outside the grid"));
        }
        if let Some(tol) = g.tol {
            if !(tol > 0.0) {
                return Err(invalid("goal.tol", "must be positive"));
            }
        }
    }
    for (i, h) in doc.humans.iter().enumerate() {
        if !cfg.social_costs.contains(&h.class) {
            return Err(invalid(format!("humans[{i}].class"), format!("unknown social class {:?}", h.class)));
        }
    }
    for (i, r) in doc.regions.iter().enumerate() {
        if !(r.min.x < r.max.x && r.min.y < r.max.y) {
            return Err(invalid(format!("regions[{i}]"), "min must be below max"));
        }
    }
    let scenario = Scenario { doc, spec, occupancy };
    scenario.filter_config().validate().map_err(|e| invalid("config.filter", e))?;
    // world construction checks the robot spawn and the humans
    scenario.build_world()?;
    Ok(scenario)
}
