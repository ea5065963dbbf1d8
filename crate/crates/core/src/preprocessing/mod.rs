//! Time windows, conflicting sets and the reduced multigraph instance.

mod conflicts;
mod reduce;
mod windows;

use serde_json::json;

pub use conflicts::{compute_conflicting_sets, overlapping_pairs, ConflictingSet};
pub use reduce::{build_reduced_instance, ReducedInstance};
pub use windows::{compute_time_windows, compute_time_windows_fixpoint, TimeWindows, MAX_PASSES};

use crate::error::Result;
use crate::instance::Instance;

/// Everything the later stages need from preprocessing.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub windows: TimeWindows,
    pub sets: Vec<ConflictingSet>,
    pub reduced: ReducedInstance,
}

/// Runs windows, conflicting sets and reduction. `passes == 0` iterates to a
/// fixpoint.
pub fn preprocess(inst: &Instance, passes: usize) -> Result<Preprocessed> {
    let windows_for = |inst: &Instance| {
        if passes == 0 {
            compute_time_windows_fixpoint(inst)
        } else {
            compute_time_windows(inst, passes)
        }
    };
    let windows = windows_for(inst)?;
    // Sets come from deadline-free windows so that the reduced instance
    // reproduces every budget-respecting vector, late ones included.
    let open = windows_for(&inst.with_deadlines(&arrival_bounds(inst))?)?;
    let sets = compute_conflicting_sets(inst, &open);
    let reduced = build_reduced_instance(inst, &sets)?;
    Ok(Preprocessed { windows, sets, reduced })
}

/// Arrival no schedule within the budgets can exceed: every arc at the
/// delay of all its other trips.
pub(crate) fn arrival_bounds(inst: &Instance) -> Vec<f64> {
    (0..inst.num_trips())
        .map(|r| {
            let t = inst.trip(r);
            let travel: f64 = t
                .route
                .iter()
                .map(|&a| {
                    let others = inst.trips_on_arc(a).len().saturating_sub(1);
                    inst.arc(a).ttf.travel_time(others as f64)
                })
                .sum();
            (t.release + t.max_stagger + travel + 1.0).max(t.deadline)
        })
        .collect()
}

/// Diagnostics dump: per-trip windows, set sizes per arc and the initial bound.
pub fn diagnostics_json(inst: &Instance, pre: &Preprocessed) -> serde_json::Value {
    let tw = &pre.windows;
    let trips: Vec<_> = (0..inst.num_trips())
        .map(|r| {
            let arcs: Vec<_> = inst
                .trip(r)
                .route
                .iter()
                .enumerate()
                .map(|(p, &a)| {
                    json!({
                        "arc": inst.arc_id(a),
                        "earliest_entry": tw.earliest_entry(r, p),
                        "latest_entry": tw.latest_entry(r, p),
                        "earliest_exit": tw.earliest_exit(r, p),
                        "latest_exit": tw.latest_exit(r, p),
                        "min_delay": tw.min_delay[r][p],
                        "max_flow": tw.max_flow[r][p],
                    })
                })
                .collect();
            json!({ "trip": inst.trip_id(r), "arcs": arcs })
        })
        .collect();
    let sets: Vec<_> = pre
        .sets
        .iter()
        .map(|s| json!({ "arc": inst.arc_id(s.arc), "trips": s.trips.len(), "pairs": s.pairs.len() }))
        .collect();
    json!({
        "initial_lb": tw.initial_lb,
        "passes": tw.passes,
        "conflicting_sets": sets,
        "reduced_trips": pre.reduced.instance.num_trips(),
        "reduced_arcs": pre.reduced.instance.num_arcs(),
        "windows": trips,
    })
}
