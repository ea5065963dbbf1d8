//! Departure staggering for fleet congestion mitigation.
//!
//! Trips follow fixed routes; each may postpone its departure within a
//! budget. The crate evaluates schedules with a discrete-event engine,
//! bounds every trip's arc entry/exit times, reduces the instance to the
//! arcs where delay can arise, builds a big-M MILP over that reduced
//! instance, and searches schedules with a local search interleaved with an
//! external MILP solver. A rolling-horizon driver and a road-network toolkit
//! (contraction, routing, scenario calibration) complete the pipeline.

pub mod engine;
pub mod error;
pub mod instance;
pub mod matheuristic;
pub mod milp;
pub mod network;
pub mod online;
pub mod preprocessing;
pub mod report;

pub use engine::{
    construct_schedule, find_conflicts, total_delay, validate_schedule, Conflict,
    FeasibilityReport, Schedule, StaggerVector, Violation,
};
pub use error::{Error, Result};
pub use instance::{
    load_instance, travel_time, Arc, ArcKind, Instance, InstanceFormat, Piece,
    TravelTimeFunction, Trip, TripRow,
};
pub use matheuristic::{run_matheuristic, MatheuristicConfig, MatheuristicResult, RunStatus};
pub use online::{run_online, OnlineConfig, OnlineResult};
pub use preprocessing::{preprocess, Preprocessed};
pub use report::{instance_stats, InstanceStats, RunReport};
