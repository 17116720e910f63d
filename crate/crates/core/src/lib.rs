//! Tactile-aware social navigation over a deterministic 2D simulator.
//!
//! The stack runs sense → costmap → plan → filter → act each tick:
//! [`sim`] provides the world and its sensors, [`costmap`] turns perception
//! into layered costs, [`planner`] searches and follows paths,
//! [`proximity`] fuses the nominal command with laser repulsion and tactile
//! contact, and [`behavior`] decides when a touched human should be routed
//! around. [`scenario`] wires these into a closed loop with an event log.

pub mod behavior;
pub mod costmap;
pub mod math;
pub mod planner;
pub mod proximity;
pub mod scenario;
pub mod sim;
