//! Guided scheduling of stencil image pipelines.
//!
//! A [`Pipeline`](ir::Pipeline) is parsed from a small text format, lowered
//! with a [`Schedule`](schedule::Schedule) into a [`LoopNest`](lower::LoopNest)
//! with inferred regions, costed by an analytical model and executed by an
//! instrumented interpreter. [`guide::Session`] walks a user through the
//! valid choices one function at a time.

pub mod bounds;
pub mod corpus;
pub mod cost;
pub mod exec;
pub mod gen;
pub mod guide;
pub mod interval;
pub mod ir;
pub mod lower;
pub mod par;
pub mod schedule;
pub mod view;

pub use cost::{estimate, CostEstimate, MachineParams};
pub use interval::{Interval, Region};
pub use ir::{parse_pipeline, FuncId, Pipeline};
pub use lower::{
    apply_compute_location, apply_tile_range, default_schedule, lower, parent_tile, tile_extent,
    valid_compute_locations, LoopNest, ScheduleError,
};
pub use schedule::{Decision, Location, Position, Schedule, TileSplit};
