//! Road graphs, contraction, shortest-path routing and the scenario
//! calibration that turns trip requests into an [`crate::Instance`].

mod contraction;
mod graph;
mod scenario;
mod synthetic;

pub use contraction::{contract_graph, contract_graph_keeping, contract_graph_with, ContractionParams, ContractionStats};
pub use graph::{read_trip_rows, write_trip_rows, Edge, Node, RoadGraph, RouteTree};
pub use scenario::{build_instance, ScenarioParams};
pub use synthetic::{generate_synthetic, SyntheticParams};
