//! Discrete-event evaluation of departure schedules.
//!
//! A trip departs at `release + shift` and never idles afterwards. When it
//! enters an arc, its flow is the number of other trips that entered the arc
//! no later than it and have not left yet, i.e. the indicator
//! `x' <= x < x' + T + d'`. Entries are processed in ascending time; trips
//! entering the same arc at the bit-identical instant are evaluated as one
//! group so each counts the others.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{ArcIndex, Instance, TripIndex, TIME_TOL};

/// Per-trip departure shift relative to the release time.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggerVector(Vec<f64>);

impl StaggerVector {
    pub fn zeros(n: usize) -> Self {
        StaggerVector(vec![0.0; n])
    }

    /// Validates length and budgets against `inst`.
    pub fn new(inst: &Instance, shifts: Vec<f64>) -> Result<Self> {
        let v = StaggerVector(shifts);
        v.check(inst)?;
        Ok(v)
    }

    /// Wraps without validation; [`construct_schedule`] checks again.
    pub fn from_vec_unchecked(shifts: Vec<f64>) -> Self {
        StaggerVector(shifts)
    }

    pub fn check(&self, inst: &Instance) -> Result<()> {
        if self.0.len() != inst.num_trips() {
            return Err(Error::Budget(format!(
                "{} shifts for {} trips",
                self.0.len(),
                inst.num_trips()
            )));
        }
        for (r, &s) in self.0.iter().enumerate() {
            let budget = inst.trip(r).max_stagger;
            if !(s >= -TIME_TOL && s <= budget + TIME_TOL) {
                return Err(Error::Budget(format!(
                    "trip {}: shift {s} outside [0, {budget}]",
                    inst.trip_id(r)
                )));
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A fully evaluated schedule, indexed by trip and route position.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub entry: Vec<Vec<f64>>,
    pub delay: Vec<Vec<f64>>,
    pub flow: Vec<Vec<u32>>,
    pub start_shift: Vec<f64>,
    pub total_delay: f64,
}

impl Schedule {
    pub fn departure(&self, r: TripIndex) -> f64 {
        self.entry[r][0]
    }

    pub fn exit(&self, inst: &Instance, r: TripIndex, pos: usize) -> f64 {
        let a = inst.trip(r).route[pos];
        self.entry[r][pos] + inst.arc(a).ttf.nominal + self.delay[r][pos]
    }

    pub fn arrival(&self, inst: &Instance, r: TripIndex) -> f64 {
        let last = self.entry[r].len() - 1;
        self.exit(inst, r, last)
    }

    pub fn shifts(&self) -> StaggerVector {
        StaggerVector(self.start_shift.clone())
    }

    /// Writes `trip_id,arc_id,entry_s,flow,delay_s` rows.
    pub fn write_csv<W: Write>(&self, inst: &Instance, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trip_id", "arc_id", "entry_s", "flow", "delay_s"])?;
        for (r, trip) in inst.trips().iter().enumerate() {
            for (pos, &a) in trip.route.iter().enumerate() {
                w.write_record([
                    inst.trip_id(r).to_string(),
                    inst.arc_id(a).to_string(),
                    self.entry[r][pos].to_string(),
                    self.flow[r][pos].to_string(),
                    self.delay[r][pos].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<schedule csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    trip: TripIndex,
    pos: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.trip.cmp(&other.trip))
            .then(self.pos.cmp(&other.pos))
    }
}

/// Min-queue of arc entries, ordered by (time, trip, position).
#[derive(Debug, Default)]
struct EventQueue(BinaryHeap<Reverse<Event>>);

impl EventQueue {
    fn push(&mut self, time: f64, trip: TripIndex, pos: usize) {
        self.0.push(Reverse(Event { time, trip, pos }));
    }

    fn pop(&mut self) -> Option<Event> {
        self.0.pop().map(|Reverse(e)| e)
    }

    /// Pops the next event only if its time is bit-identical to `time`.
    fn pop_at(&mut self, time: f64) -> Option<Event> {
        match self.0.peek() {
            Some(Reverse(e)) if e.time.total_cmp(&time) == Ordering::Equal => self.pop(),
            _ => None,
        }
    }
}

/// Sorted multiset of exit times on one arc.
#[derive(Debug, Default, Clone)]
struct Arrivals(Vec<f64>);

impl Arrivals {
    fn insert(&mut self, t: f64) {
        let i = self.0.partition_point(|&v| v <= t);
        self.0.insert(i, t);
    }

    /// Number of recorded exits strictly after `t`.
    fn count_after(&self, t: f64) -> usize {
        self.0.len() - self.0.partition_point(|&v| v <= t)
    }
}

fn empty_schedule(inst: &Instance) -> Schedule {
    let n = inst.num_trips();
    let mut entry = Vec::with_capacity(n);
    let mut delay = Vec::with_capacity(n);
    let mut flow = Vec::with_capacity(n);
    for t in inst.trips() {
        entry.push(vec![f64::INFINITY; t.route.len()]);
        delay.push(vec![0.0; t.route.len()]);
        flow.push(vec![0; t.route.len()]);
    }
    Schedule {
        entry,
        delay,
        flow,
        start_shift: vec![0.0; n],
        total_delay: 0.0,
    }
}

/// Runs the event loop until the queue is empty, writing into `sched`.
fn run_events(
    inst: &Instance,
    sched: &mut Schedule,
    queue: &mut EventQueue,
    arrivals: &mut [Arrivals],
) {
    let mut group: Vec<Event> = Vec::new();
    let mut group_count: Vec<(ArcIndex, usize)> = Vec::new();
    while let Some(first) = queue.pop() {
        group.clear();
        group.push(first);
        while let Some(e) = queue.pop_at(first.time) {
            group.push(e);
        }
        group_count.clear();
        for e in &group {
            let a = inst.trip(e.trip).route[e.pos];
            match group_count.iter_mut().find(|(b, _)| *b == a) {
                Some((_, c)) => *c += 1,
                None => group_count.push((a, 1)),
            }
        }
        // flows first: simultaneous entrants must not see each other's exits
        let mut exits = Vec::with_capacity(group.len());
        for e in &group {
            let a = inst.trip(e.trip).route[e.pos];
            let same = group_count.iter().find(|(b, _)| *b == a).unwrap().1;
            let f = arrivals[a].count_after(e.time) + same - 1;
            let ttf = &inst.arc(a).ttf;
            let d = ttf.delay(f as f64);
            sched.entry[e.trip][e.pos] = e.time;
            sched.flow[e.trip][e.pos] = f as u32;
            sched.delay[e.trip][e.pos] = d;
            exits.push((a, e.time + ttf.nominal + d));
        }
        for (e, &(a, exit)) in group.iter().zip(&exits) {
            arrivals[a].insert(exit);
            if e.pos + 1 < inst.trip(e.trip).route.len() {
                queue.push(exit, e.trip, e.pos + 1);
            }
        }
    }
}

fn sum_delays(sched: &Schedule) -> f64 {
    sched
        .delay
        .iter()
        .map(|ds| ds.iter().sum::<f64>())
        .sum()
}

/// Evaluates the schedule induced by `shifts`. With all-zero shifts this is
/// the uncontrolled solution.
pub fn construct_schedule(inst: &Instance, shifts: &StaggerVector) -> Result<Schedule> {
    shifts.check(inst)?;
    let mut sched = empty_schedule(inst);
    let mut queue = EventQueue::default();
    for (r, t) in inst.trips().iter().enumerate() {
        let s = shifts.0[r];
        sched.start_shift[r] = s;
        queue.push(t.release + s, r, 0);
    }
    let mut arrivals = vec![Arrivals::default(); inst.num_arcs()];
    run_events(inst, &mut sched, &mut queue, &mut arrivals);
    sched.total_delay = sum_delays(&sched);
    Ok(sched)
}

/// Re-evaluates `base` after the shifts of `changed` trips were replaced by
/// `new_shifts`. Only events at or after the earliest affected instant are
/// recomputed; the result is bit-identical to [`construct_schedule`] on the
/// new shifts.
pub fn repropagate(
    inst: &Instance,
    base: &Schedule,
    changed: &[(TripIndex, f64)],
) -> Result<Schedule> {
    let mut sched = base.clone();
    let mut is_changed = vec![false; inst.num_trips()];
    let mut t0 = f64::INFINITY;
    for &(r, s) in changed {
        let trip = inst.trip(r);
        if !(s >= -TIME_TOL && s <= trip.max_stagger + TIME_TOL) {
            return Err(Error::Budget(format!(
                "trip {}: shift {s} outside [0, {}]",
                inst.trip_id(r),
                trip.max_stagger
            )));
        }
        is_changed[r] = true;
        sched.start_shift[r] = s;
        t0 = t0.min(base.entry[r][0]).min(trip.release + s);
    }
    if changed.is_empty() {
        return Ok(sched);
    }

    let mut queue = EventQueue::default();
    let mut arrivals = vec![Arrivals::default(); inst.num_arcs()];
    for (r, trip) in inst.trips().iter().enumerate() {
        if is_changed[r] {
            queue.push(trip.release + sched.start_shift[r], r, 0);
            continue;
        }
        for (pos, &a) in trip.route.iter().enumerate() {
            let x = base.entry[r][pos];
            if x < t0 {
                arrivals[a].insert(x + inst.arc(a).ttf.nominal + base.delay[r][pos]);
            } else {
                queue.push(x, r, pos);
                break;
            }
        }
    }
    run_events(inst, &mut sched, &mut queue, &mut arrivals);
    sched.total_delay = sum_delays(&sched);
    Ok(sched)
}

/// Σ of all delay entries.
pub fn total_delay(sched: &Schedule) -> f64 {
    sched.total_delay
}

/// An ordered conflict: `later` entered `arc` while `earlier` occupied it
/// and incurred `delay` there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conflict {
    pub earlier: TripIndex,
    pub later: TripIndex,
    pub arc: ArcIndex,
    pub delay: f64,
}

/// Lists every conflict in `sched`, sorted by induced delay (descending),
/// then arc, then trip indices.
pub fn find_conflicts(inst: &Instance, sched: &Schedule) -> Vec<Conflict> {
    let mut out = Vec::new();
    let mut on_arc: Vec<(f64, f64, TripIndex, usize)> = Vec::new();
    for a in 0..inst.num_arcs() {
        let trips = inst.trips_on_arc(a);
        if trips.len() < 2 {
            continue;
        }
        on_arc.clear();
        for &r in trips {
            let pos = inst.position(r, a).unwrap();
            on_arc.push((sched.entry[r][pos], sched.exit(inst, r, pos), r, pos));
        }
        on_arc.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.2.cmp(&q.2)));
        for i in 0..on_arc.len() {
            let (x_later, _, later, pos) = on_arc[i];
            let d = sched.delay[later][pos];
            if d <= 0.0 {
                continue;
            }
            for &(x_e, exit_e, earlier, _) in on_arc.iter() {
                if x_e > x_later {
                    break;
                }
                if earlier != later && x_later < exit_e {
                    out.push(Conflict {
                        earlier,
                        later,
                        arc: a,
                        delay: d,
                    });
                }
            }
        }
    }
    out.sort_by(|p, q| {
        q.delay
            .total_cmp(&p.delay)
            .then(p.arc.cmp(&q.arc))
            .then(p.earlier.cmp(&q.earlier))
            .then(p.later.cmp(&q.later))
    });
    out
}

/// One way a schedule can fail to be a feasible solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// The schedule does not cover the trip's route.
    Shape { trip: TripIndex },
    /// i) departure before release.
    EarlyDeparture { trip: TripIndex, departure: f64, release: f64 },
    /// ii) staggering beyond budget (or negative).
    Budget { trip: TripIndex, shift: f64, max_stagger: f64 },
    /// iii) arrival after deadline.
    LateArrival { trip: TripIndex, arrival: f64, deadline: f64 },
    /// Entry on the next arc differs from exit of the previous one.
    Continuity { trip: TripIndex, pos: usize, residual: f64 },
    /// Stored flow differs from the indicator count.
    Flow { trip: TripIndex, pos: usize, stored: u32, expected: u32 },
    /// Stored delay differs from the travel-time function at the stored flow.
    Delay { trip: TripIndex, pos: usize, stored: f64, expected: f64 },
    /// Stored total differs from the sum of delays.
    TotalDelay { stored: f64, expected: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks i)–iii) only; the cheap test used inside search loops.
pub fn meets_time_windows(inst: &Instance, sched: &Schedule) -> bool {
    inst.trips().iter().enumerate().all(|(r, t)| {
        let shift = sched.start_shift[r];
        shift >= -TIME_TOL
            && shift <= t.max_stagger + TIME_TOL
            && sched.arrival(inst, r) <= t.deadline + TIME_TOL
    })
}

/// Summed lateness over all trips; arrivals within `TIME_TOL` of their
/// deadline count as on time.
pub fn lateness(inst: &Instance, sched: &Schedule) -> f64 {
    (0..inst.num_trips())
        .map(|r| sched.arrival(inst, r) - inst.trip(r).deadline)
        .filter(|&l| l > TIME_TOL)
        .sum()
}

/// Full check: time windows, continuity, flow consistency against the
/// pairwise indicator, delay consistency and the stored total.
pub fn validate_schedule(inst: &Instance, sched: &Schedule) -> FeasibilityReport {
    let mut v = Vec::new();
    let shape_ok = sched.entry.len() == inst.num_trips()
        && sched.delay.len() == inst.num_trips()
        && sched.flow.len() == inst.num_trips()
        && sched.start_shift.len() == inst.num_trips();
    if !shape_ok {
        v.push(Violation::Shape { trip: 0 });
        return FeasibilityReport { violations: v };
    }
    let mut bad = vec![false; inst.num_trips()];
    for (r, t) in inst.trips().iter().enumerate() {
        let n = t.route.len();
        if sched.entry[r].len() != n || sched.delay[r].len() != n || sched.flow[r].len() != n {
            v.push(Violation::Shape { trip: r });
            bad[r] = true;
        }
    }
    for (r, t) in inst.trips().iter().enumerate() {
        if bad[r] {
            continue;
        }
        let dep = sched.entry[r][0];
        if dep < t.release - TIME_TOL {
            v.push(Violation::EarlyDeparture {
                trip: r,
                departure: dep,
                release: t.release,
            });
        }
        let shift = dep - t.release;
        if shift > t.max_stagger + TIME_TOL || sched.start_shift[r] > t.max_stagger + TIME_TOL {
            v.push(Violation::Budget {
                trip: r,
                shift: shift.max(sched.start_shift[r]),
                max_stagger: t.max_stagger,
            });
        }
        let arrival = sched.arrival(inst, r);
        if arrival > t.deadline + TIME_TOL {
            v.push(Violation::LateArrival {
                trip: r,
                arrival,
                deadline: t.deadline,
            });
        }
        for pos in 0..t.route.len().saturating_sub(1) {
            let residual = sched.entry[r][pos + 1] - sched.exit(inst, r, pos);
            if residual.abs() > TIME_TOL {
                v.push(Violation::Continuity {
                    trip: r,
                    pos,
                    residual,
                });
            }
        }
    }
    for a in 0..inst.num_arcs() {
        let trips = inst.trips_on_arc(a);
        let ttf = &inst.arc(a).ttf;
        for &r in trips {
            if bad[r] {
                continue;
            }
            let pos = inst.position(r, a).unwrap();
            let x = sched.entry[r][pos];
            let expected = trips
                .iter()
                .filter(|&&s| s != r && !bad[s])
                .filter(|&&s| {
                    let ps = inst.position(s, a).unwrap();
                    let xs = sched.entry[s][ps];
                    xs <= x && x < sched.exit(inst, s, ps)
                })
                .count() as u32;
            let stored = sched.flow[r][pos];
            if stored != expected {
                v.push(Violation::Flow {
                    trip: r,
                    pos,
                    stored,
                    expected,
                });
            }
            let d_exp = ttf.delay(stored as f64);
            if (sched.delay[r][pos] - d_exp).abs() > TIME_TOL {
                v.push(Violation::Delay {
                    trip: r,
                    pos,
                    stored: sched.delay[r][pos],
                    expected: d_exp,
                });
            }
        }
    }
    let expected = sum_delays(sched);
    if (expected - sched.total_delay).abs() > TIME_TOL * (1.0 + expected.abs()) {
        v.push(Violation::TotalDelay {
            stored: sched.total_delay,
            expected,
        });
    }
    FeasibilityReport { violations: v }
}
