//! Scenarios shipped with the library.

use super::schema::{load_scenario, Scenario, ScenarioError};

const BUNDLED: [(&str, &str, &str); 5] = [
    ("empty_room", "open room, goal straight ahead", include_str!("../../scenarios/empty_room.json")),
    (
        "touch_while_idle",
        "a pedestrian touches the idle robot from behind; the robot turns and identifies them",
        include_str!("../../scenarios/touch_while_idle.json"),
    ),
    (
        "two_exits_block",
        "a pedestrian keeps blocking the near exit after contact; the robot reroutes through the far exit",
        include_str!("../../scenarios/two_exits_block.json"),
    ),
    (
        "two_exits_yield",
        "a pedestrian steps aside after contact; the robot continues through the near exit",
        include_str!("../../scenarios/two_exits_yield.json"),
    ),
    (
        "crowd_traversal",
        "eight pedestrians walking loops in a 10 x 10 m room (illustrative layout)",
        include_str!("../../scenarios/crowd_traversal.json"),
    ),
];

/// `(name, description)` of every bundled scenario.
pub fn bundled_names() -> impl Iterator<Item = (&'static str, &'static str)> {
    BUNDLED.iter().map(|&(n, d, _)| (n, d))
}

/// Source text of a bundled scenario.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _, _)| *n == name).map(|&(_, _, s)| s)
}

/// Loads a bundled scenario by name.
pub fn bundled_scenario(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    bundled_source(name).map(load_scenario)
}
