//! Simulation library for adaptive multi-resolution aerial field surveys.
//!
//! A virtual UAV covers a labeled 2D field with a nadir camera. Each image is
//! segmented by an altitude-dependent oracle: the coarser the ground sampling
//! distance (GSD), the more detail is pooled away and the more labels are
//! corrupted. A Gaussian-process decision function watches the vegetation
//! ratio of each survey image and decides whether to re-scout the region at a
//! lower altitude, trading flight time for segmentation accuracy. Results
//! from different altitudes are fused on a common base-resolution map under a
//! highest-resolution-wins rule.
//!
//! Modules, bottom-up:
//!
//! - [`field`]: labeled grids, synthetic field generation, raster I/O.
//! - [`camera`]: altitude/GSD/footprint geometry and lawn-mower waypoint grids.
//! - [`oracle`]: the altitude-dependent segmentation simulator.
//! - [`metrics`]: vegetation ratio, IoU/mIoU, fused-map maintenance.
//! - [`gp`]: squared-exponential GP regression and hyperparameter search.
//! - [`planner`]: the descend/continue decision function and its online update.
//! - [`sim`]: full-mission execution with trapezoidal time accounting.
//! - [`cli`]: experiment configuration and the command front ends.
//!
//! Everything is deterministic: randomness is derived from counter-based
//! hashes of explicit seeds, so identical inputs give bitwise-identical
//! outputs regardless of call order or thread count.

pub mod camera;
pub mod cli;
pub mod field;
pub mod geom;
pub mod gp;
pub mod metrics;
pub mod oracle;
pub mod planner;
mod rng;
pub mod sim;

pub use camera::{CameraModel, GsdLadder, Waypoint, WaypointLevel};
pub use field::{ClassId, FieldSpec, LabelGrid};
pub use geom::Rect;
pub use gp::{GpModel, Hyperparams, SearchSpace};
pub use metrics::{FusedMap, SegStats};
pub use oracle::OracleParams;
pub use planner::{Decision, DecisionAction, DecisionState, InitParams, Observation};
pub use sim::{CompareRow, MissionEvent, MissionTrace, Strategy, TimeModel};
