use std::collections::{BTreeMap, HashMap};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::graph::RoadGraph;
use crate::engine::{construct_schedule, StaggerVector};
use crate::error::{Error, Result};
use crate::instance::{Arc, ArcKind, Instance, Trip, TripRow, TravelTimeFunction, DEFAULT_EPSILON};

/// Calibration turning a road graph and trip requests into an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Nominal speed in m/s.
    pub speed: f64,
    /// Seconds of nominal travel time per unit of capacity.
    pub capacity_divisor: f64,
    pub slope_factor: f64,
    /// Deadline slack as a fraction of the route's nominal time.
    pub deadline_quota: f64,
    /// Fixed deadline slack in seconds.
    pub deadline_fixed: f64,
    /// Stagger budget as a fraction of the route's nominal time.
    pub stagger_pct: f64,
    pub epsilon: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams::low_congestion()
    }
}

impl ScenarioParams {
    pub fn low_congestion() -> Self {
        ScenarioParams {
            speed: 20.0 / 3.6,
            capacity_divisor: 15.0,
            slope_factor: 0.5,
            deadline_quota: 0.25,
            deadline_fixed: 30.0,
            stagger_pct: 0.10,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn high_congestion() -> Self {
        ScenarioParams {
            capacity_divisor: 30.0,
            ..Self::low_congestion()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("speed", self.speed),
            ("capacity_divisor", self.capacity_divisor),
            ("slope_factor", self.slope_factor),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("scenario {name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("deadline_quota", self.deadline_quota), ("deadline_fixed", self.deadline_fixed)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("scenario {name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.stagger_pct) {
            return Err(Error::Validation(format!(
                "scenario stagger_pct must lie in [0, 1], got {}",
                self.stagger_pct
            )));
        }
        Ok(())
    }

    /// Capacity of an arc with nominal time `nominal`, rounded half-up and
    /// clamped to at least one vehicle.
    pub fn capacity(&self, nominal: f64) -> f64 {
        (nominal / self.capacity_divisor + 0.5).floor().max(1.0)
    }

    /// Single-piece travel-time function: threshold equals capacity and the
    /// slope is `slope_factor * nominal / capacity`.
    pub fn travel_time_function(&self, nominal: f64) -> Result<TravelTimeFunction> {
        let cap = self.capacity(nominal);
        TravelTimeFunction::single(nominal, self.slope_factor * nominal / cap, cap)
    }
}

/// Routes every trip on its shortest path and calibrates arcs and deadlines.
/// Only arcs used by at least one route become instance arcs.
pub fn build_instance(g: &RoadGraph, trips: &[TripRow], params: &ScenarioParams) -> Result<Instance> {
    params.validate()?;
    let index = g.node_index();
    let out = g.out_edges();
    let lookup = |trip: &str, node: &str| {
        index
            .get(node)
            .copied()
            .ok_or_else(|| Error::Routing(format!("trip {trip}: node {node} not in graph")))
    };

    let mut by_origin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut ends = Vec::with_capacity(trips.len());
    for (i, t) in trips.iter().enumerate() {
        let o = lookup(&t.trip_id, &t.origin_node)?;
        let d = lookup(&t.trip_id, &t.dest_node)?;
        if o == d {
            return Err(Error::Routing(format!(
                "trip {}: origin and destination coincide",
                t.trip_id
            )));
        }
        if !t.release_s.is_finite() {
            return Err(Error::Routing(format!("trip {}: release must be finite", t.trip_id)));
        }
        by_origin.entry(o).or_default().push(i);
        ends.push(d);
    }

    let mut edge_routes: Vec<Vec<usize>> = vec![Vec::new(); trips.len()];
    for (&o, members) in &by_origin {
        let tree = g.route_tree(o, &out);
        for &i in members {
            edge_routes[i] = tree.route(g, ends[i]).ok_or_else(|| {
                Error::Routing(format!(
                    "trip {}: {} unreachable from {}",
                    trips[i].trip_id, trips[i].dest_node, trips[i].origin_node
                ))
            })?;
        }
    }

    let mut arc_of_edge: HashMap<usize, usize> = HashMap::new();
    let mut used: Vec<usize> = edge_routes.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut arcs = Vec::with_capacity(used.len());
    let mut clamped = 0usize;
    for (ai, &e) in used.iter().enumerate() {
        let edge = &g.edges[e];
        let nominal = edge.length / params.speed;
        if nominal / params.capacity_divisor + 0.5 < 1.0 {
            clamped += 1;
        }
        arc_of_edge.insert(e, ai);
        arcs.push((
            edge.id.clone(),
            Arc {
                tail: edge.tail,
                head: edge.head,
                ttf: params.travel_time_function(nominal)?,
                kind: ArcKind::Original,
            },
        ));
    }
    if clamped > 0 {
        warn!("{clamped} arcs had capacity below one and were clamped to 1");
    }

    let nominal_of = |route: &[usize]| -> f64 { route.iter().map(|&a| arcs[a].1.ttf.nominal).sum() };
    let mut trip_list = Vec::with_capacity(trips.len());
    for (t, er) in trips.iter().zip(&edge_routes) {
        let route: Vec<usize> = er.iter().map(|e| arc_of_edge[e]).collect();
        let nominal = nominal_of(&route);
        let sigma = params.stagger_pct * nominal;
        // provisional deadline; replaced below once the uncontrolled run is known
        trip_list.push((
            t.trip_id.clone(),
            Trip {
                route,
                release: t.release_s,
                deadline: f64::MAX,
                max_stagger: sigma,
            },
        ));
    }
    let nodes: Vec<String> = g.nodes.iter().map(|n| n.id.clone()).collect();
    let provisional = Instance::new(nodes, arcs, trip_list, params.epsilon)?;
    let unc = construct_schedule(&provisional, &StaggerVector::zeros(provisional.num_trips()))?;
    let deadlines: Vec<f64> = (0..provisional.num_trips())
        .map(|r| {
            unc.arrival(&provisional, r)
                + params.deadline_quota * provisional.route_nominal(r)
                + params.deadline_fixed
        })
        .collect();
    info!(
        "built instance: {} trips, {} arcs, uncontrolled delay {:.3}s",
        provisional.num_trips(),
        provisional.num_arcs(),
        unc.total_delay
    );
    provisional.with_deadlines(&deadlines)
}
