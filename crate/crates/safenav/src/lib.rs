//! Safe navigation and map building for non-holonomic robots.
//!
//! The crate covers potential-field path planning in dynamic planar worlds,
//! sensor-network based navigation in 2D and 3D, sliding-mode path tracking and
//! randomized exploration with occupancy mapping, plus a deterministic scenario
//! simulator that ties them together.

pub mod apf;
pub mod error;
pub mod explorer;
pub mod geom;
pub mod prm3;
pub mod sensing;
pub mod simcli;
pub mod tangent_graph;
pub mod tracking;
pub mod vehicle;

pub use error::{Error, Result};
