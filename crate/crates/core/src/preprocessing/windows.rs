use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Instance, TripIndex, TIME_TOL};

/// Upper bound on passes when iterating to a fixpoint.
pub const MAX_PASSES: usize = 10;

/// Arc-specific time windows indexed by trip and route position.
///
/// Only earliest entries and latest exits are stored. The latest entry of a
/// position is the latest exit of the previous one (release plus budget on
/// the first arc) and the earliest exit is the earliest entry of the next
/// one (free flow on the last arc).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeWindows {
    pub earliest_entry: Vec<Vec<f64>>,
    pub latest_exit: Vec<Vec<f64>>,
    pub min_delay: Vec<Vec<f64>>,
    pub min_flow: Vec<Vec<u32>>,
    pub max_flow: Vec<Vec<u32>>,
    latest_departure: Vec<f64>,
    last_nominal: Vec<f64>,
    pub initial_lb: f64,
    pub passes: usize,
}

impl TimeWindows {
    pub fn num_trips(&self) -> usize {
        self.earliest_entry.len()
    }

    pub fn earliest_entry(&self, r: TripIndex, pos: usize) -> f64 {
        self.earliest_entry[r][pos]
    }

    pub fn latest_entry(&self, r: TripIndex, pos: usize) -> f64 {
        if pos == 0 {
            self.latest_departure[r]
        } else {
            self.latest_exit[r][pos - 1]
        }
    }

    pub fn earliest_exit(&self, r: TripIndex, pos: usize) -> f64 {
        if pos + 1 == self.earliest_entry[r].len() {
            self.earliest_entry[r][pos] + self.last_nominal[r]
        } else {
            self.earliest_entry[r][pos + 1]
        }
    }

    pub fn latest_exit(&self, r: TripIndex, pos: usize) -> f64 {
        self.latest_exit[r][pos]
    }

    /// Windows of a derived instance, given for each of its trips the source
    /// trip and the source position span `[first, last]` of every position.
    pub(crate) fn project(&self, spans: &[(TripIndex, Vec<(usize, usize)>)], last_nominal: &[f64]) -> TimeWindows {
        let mut out = TimeWindows {
            earliest_entry: Vec::with_capacity(spans.len()),
            latest_exit: Vec::with_capacity(spans.len()),
            min_delay: Vec::with_capacity(spans.len()),
            min_flow: Vec::with_capacity(spans.len()),
            max_flow: Vec::with_capacity(spans.len()),
            latest_departure: Vec::with_capacity(spans.len()),
            last_nominal: last_nominal.to_vec(),
            initial_lb: self.initial_lb,
            passes: self.passes,
        };
        for (r, ranges) in spans {
            let r = *r;
            out.earliest_entry
                .push(ranges.iter().map(|&(f, _)| self.earliest_entry[r][f]).collect());
            out.latest_exit
                .push(ranges.iter().map(|&(_, l)| self.latest_exit[r][l]).collect());
            out.min_delay
                .push(ranges.iter().map(|&(f, l)| self.min_delay[r][f..=l].iter().sum()).collect());
            out.min_flow
                .push(ranges.iter().map(|&(f, l)| self.min_flow[r][f..=l].iter().copied().max().unwrap_or(0)).collect());
            out.max_flow
                .push(ranges.iter().map(|&(f, l)| self.max_flow[r][f..=l].iter().copied().max().unwrap_or(0)).collect());
            out.latest_departure.push(self.latest_departure[r]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, TripIndex, usize);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

fn initialize(inst: &Instance) -> TimeWindows {
    let n = inst.num_trips();
    let mut tw = TimeWindows {
        earliest_entry: Vec::with_capacity(n),
        latest_exit: Vec::with_capacity(n),
        min_delay: Vec::with_capacity(n),
        min_flow: Vec::with_capacity(n),
        max_flow: Vec::with_capacity(n),
        latest_departure: Vec::with_capacity(n),
        last_nominal: Vec::with_capacity(n),
        initial_lb: 0.0,
        passes: 0,
    };
    for trip in inst.trips() {
        let len = trip.route.len();
        let nominal: Vec<f64> = trip.route.iter().map(|&a| inst.arc(a).ttf.nominal).collect();
        let mut ee = Vec::with_capacity(len);
        let mut t = trip.release;
        for &tn in &nominal {
            ee.push(t);
            t += tn;
        }
        let mut lx = vec![0.0; len];
        let mut t = trip.deadline;
        for pos in (0..len).rev() {
            lx[pos] = t;
            t -= nominal[pos];
        }
        tw.earliest_entry.push(ee);
        tw.latest_exit.push(lx);
        tw.min_delay.push(vec![0.0; len]);
        tw.min_flow.push(vec![0; len]);
        tw.max_flow.push(vec![0; len]);
        tw.latest_departure.push(trip.release + trip.max_stagger);
        tw.last_nominal.push(nominal[len - 1]);
    }
    tw
}

/// One queue-driven sweep over every (trip, position). Returns whether any
/// bound moved.
fn sweep(inst: &Instance, tw: &mut TimeWindows) -> bool {
    let mut changed = false;
    let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    for (r, ee) in tw.earliest_entry.iter().enumerate() {
        for (pos, &e) in ee.iter().enumerate() {
            heap.push(Reverse(Key(e, r, pos)));
        }
    }
    while let Some(Reverse(Key(key, r, pos))) = heap.pop() {
        if key != tw.earliest_entry[r][pos] {
            continue; // stale, a newer key was pushed
        }
        let a = inst.trip(r).route[pos];
        let ttf = &inst.arc(a).ttf;
        let ee = tw.earliest_entry(r, pos);
        let le = tw.latest_entry(r, pos);

        // trips that certainly entered before and are certainly still inside
        let mut fmin = 0u32;
        let mut fmax = 0u32;
        for &o in inst.trips_on_arc(a) {
            if o == r {
                continue;
            }
            let op = inst.position(o, a).expect("trip listed on arc");
            // margins absorb roundoff between these bounds and engine times
            if ee > tw.latest_entry(o, op) + TIME_TOL && le + TIME_TOL < tw.earliest_exit(o, op) {
                fmin += 1;
            }
            if tw.earliest_entry(o, op) <= le + TIME_TOL && ee <= tw.latest_exit(o, op) + TIME_TOL {
                fmax += 1;
            }
        }
        tw.min_flow[r][pos] = tw.min_flow[r][pos].max(fmin);
        let rho = ttf.delay(fmin as f64);
        if rho > tw.min_delay[r][pos] {
            let inc = rho - tw.min_delay[r][pos];
            tw.min_delay[r][pos] = rho;
            for later in pos + 1..tw.earliest_entry[r].len() {
                tw.earliest_entry[r][later] += inc;
                heap.push(Reverse(Key(tw.earliest_entry[r][later], r, later)));
            }
            changed = true;
        }

        tw.max_flow[r][pos] = fmax;
        let bound = le + ttf.travel_time(fmax as f64);
        if bound < tw.latest_exit[r][pos] {
            tw.latest_exit[r][pos] = bound;
            changed = true;
        }
    }
    changed
}

fn check(inst: &Instance, tw: &TimeWindows) -> Result<()> {
    for r in 0..tw.num_trips() {
        for pos in 0..tw.earliest_entry[r].len() {
            // the minimum delay also applies on the last arc
            let exit = tw
                .earliest_exit(r, pos)
                .max(tw.earliest_entry(r, pos) + inst.arc(inst.trip(r).route[pos]).ttf.nominal + tw.min_delay[r][pos]);
            if tw.latest_exit(r, pos) + TIME_TOL < exit || tw.latest_entry(r, pos) + TIME_TOL < tw.earliest_entry(r, pos) {
                let a = inst.trip(r).route[pos];
                return Err(Error::Infeasible(format!(
                    "trip {}: empty time window on arc {} (earliest exit {:.6}, latest exit {:.6})",
                    inst.trip_id(r),
                    inst.arc_id(a),
                    exit,
                    tw.latest_exit(r, pos)
                )));
            }
        }
    }
    Ok(())
}

/// Computes time windows with exactly `passes` sweeps (at least one).
pub fn compute_time_windows(inst: &Instance, passes: usize) -> Result<TimeWindows> {
    let mut tw = initialize(inst);
    for _ in 0..passes.max(1) {
        sweep(inst, &mut tw);
        tw.passes += 1;
    }
    finish(inst, tw)
}

/// Repeats sweeps until no bound moves, at most [`MAX_PASSES`] times.
pub fn compute_time_windows_fixpoint(inst: &Instance) -> Result<TimeWindows> {
    let mut tw = initialize(inst);
    while tw.passes < MAX_PASSES {
        tw.passes += 1;
        if !sweep(inst, &mut tw) {
            break;
        }
    }
    finish(inst, tw)
}

fn finish(inst: &Instance, mut tw: TimeWindows) -> Result<TimeWindows> {
    tw.initial_lb = tw.min_delay.iter().flatten().sum();
    debug!("time windows after {} passes, initial LB {:.6}", tw.passes, tw.initial_lb);
    check(inst, &tw)?;
    Ok(tw)
}
