use std::collections::HashMap;

use super::conflicts::ConflictingSet;
use super::windows::TimeWindows;
use crate::engine::StaggerVector;
use crate::error::Result;
use crate::instance::{Arc, ArcIndex, ArcKind, Instance, TravelTimeFunction, Trip, TripIndex};

/// Multigraph instance restricted to trips that may be delayed.
///
/// Every conflicting set becomes its own parallel copy of its arc; runs of
/// conflict-free arcs collapse into merged arcs that never produce delay.
#[derive(Debug, Clone)]
pub struct ReducedInstance {
    pub instance: Instance,
    /// Reduced indices of the conflicting arcs, one per set, in set order.
    pub conflicting_arcs: Vec<ArcIndex>,
    /// Ordered overlapping pairs per conflicting arc, in reduced trip indices.
    pub pairs: Vec<Vec<(TripIndex, TripIndex)>>,
    /// Source trip of each reduced trip.
    pub source_trip: Vec<TripIndex>,
    /// Reduced index of each source trip, `None` if it was dropped.
    pub reduced_trip: Vec<Option<TripIndex>>,
    /// For each reduced trip and position, the span of source positions.
    pub spans: Vec<Vec<(usize, usize)>>,
}

impl ReducedInstance {
    /// Source arcs traversed by reduced arc `a`.
    pub fn expansion(&self, a: ArcIndex) -> Vec<ArcIndex> {
        match &self.instance.arc(a).kind {
            ArcKind::Conflicting { parent } => vec![*parent],
            ArcKind::Merged { parts } => parts.clone(),
            ArcKind::Original => vec![a],
        }
    }

    pub fn num_removed(&self) -> usize {
        self.reduced_trip.iter().filter(|r| r.is_none()).count()
    }

    /// Shifts of the kept trips.
    pub fn reduce_shifts(&self, shifts: &StaggerVector) -> StaggerVector {
        StaggerVector::from_vec_unchecked(self.source_trip.iter().map(|&r| shifts.as_slice()[r]).collect())
    }

    /// Source shifts taking reduced values where available and `base`
    /// elsewhere.
    pub fn lift_shifts(&self, reduced: &StaggerVector, base: &StaggerVector) -> StaggerVector {
        let mut out = base.as_slice().to_vec();
        for (rr, &r) in self.source_trip.iter().enumerate() {
            out[r] = reduced.as_slice()[rr];
        }
        StaggerVector::from_vec_unchecked(out)
    }

    /// Source windows restated on reduced trips and positions.
    pub fn project_windows(&self, tw: &TimeWindows) -> TimeWindows {
        let spans: Vec<(TripIndex, Vec<(usize, usize)>)> = self
            .source_trip
            .iter()
            .zip(&self.spans)
            .map(|(&r, s)| (r, s.clone()))
            .collect();
        let last_nominal: Vec<f64> = (0..self.instance.num_trips())
            .map(|rr| {
                let route = &self.instance.trip(rr).route;
                self.instance.arc(route[route.len() - 1]).ttf.nominal
            })
            .collect();
        tw.project(&spans, &last_nominal)
    }
}

pub fn build_reduced_instance(inst: &Instance, sets: &[ConflictingSet]) -> Result<ReducedInstance> {
    let mut set_of: HashMap<(ArcIndex, TripIndex), usize> = HashMap::new();
    let mut arcs: Vec<(String, Arc)> = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        for &r in &s.trips {
            set_of.insert((s.arc, r), i);
        }
        let parent = inst.arc(s.arc);
        arcs.push((
            format!("{}#{}", inst.arc_id(s.arc), i),
            Arc {
                kind: ArcKind::Conflicting { parent: s.arc },
                ..parent.clone()
            },
        ));
    }

    let mut merged: HashMap<Vec<ArcIndex>, ArcIndex> = HashMap::new();
    let mut trips = Vec::new();
    let mut source_trip = Vec::new();
    let mut reduced_trip = vec![None; inst.num_trips()];
    let mut spans = Vec::new();
    for (r, trip) in inst.trips().iter().enumerate() {
        let tagged: Vec<Option<usize>> = trip.route.iter().map(|&a| set_of.get(&(a, r)).copied()).collect();
        if tagged.iter().all(Option::is_none) {
            continue;
        }
        let mut route = Vec::new();
        let mut span = Vec::new();
        let mut pos = 0;
        while pos < tagged.len() {
            if let Some(i) = tagged[pos] {
                route.push(i);
                span.push((pos, pos));
                pos += 1;
                continue;
            }
            let start = pos;
            while pos < tagged.len() && tagged[pos].is_none() {
                pos += 1;
            }
            let parts = trip.route[start..pos].to_vec();
            let idx = *merged.entry(parts.clone()).or_insert_with(|| {
                let first = inst.arc(parts[0]);
                let last = inst.arc(parts[parts.len() - 1]);
                let nominal = parts.iter().map(|&a| inst.arc(a).ttf.nominal).sum();
                let id = parts.iter().map(|&a| inst.arc_id(a)).collect::<Vec<_>>().join("+");
                arcs.push((
                    id,
                    Arc {
                        tail: first.tail,
                        head: last.head,
                        ttf: TravelTimeFunction::free_flow(nominal),
                        kind: ArcKind::Merged { parts: parts.clone() },
                    },
                ));
                arcs.len() - 1
            });
            route.push(idx);
            span.push((start, pos - 1));
        }
        reduced_trip[r] = Some(trips.len());
        source_trip.push(r);
        spans.push(span);
        trips.push((inst.trip_id(r).to_string(), Trip { route, ..trip.clone() }));
    }

    let instance = Instance::new(inst.node_ids().to_vec(), arcs, trips, inst.epsilon())?;
    let pairs = sets
        .iter()
        .map(|s| {
            s.pairs
                .iter()
                .map(|&(r, o)| (reduced_trip[r].expect("member kept"), reduced_trip[o].expect("member kept")))
                .collect()
        })
        .collect();
    Ok(ReducedInstance {
        instance,
        conflicting_arcs: (0..sets.len()).collect(),
        pairs,
        source_trip,
        reduced_trip,
        spans,
    })
}
