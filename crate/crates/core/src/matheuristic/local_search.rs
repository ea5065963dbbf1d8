use log::debug;
use serde::Serialize;

use crate::engine::{find_conflicts, lateness, repropagate, Conflict, Schedule};
use crate::error::{Error, Result};
use crate::instance::{ArcIndex, Instance, TripIndex};

/// Strict-improvement tolerance in seconds.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

/// A conflict with the shifts available to resolve it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConflictWorkItem {
    pub earlier: TripIndex,
    pub later: TripIndex,
    pub arc: ArcIndex,
    /// Staggering needed so that `later` enters after `earlier` has left.
    pub overlap: f64,
    /// Feasible backward shift of `earlier`.
    pub backward: f64,
    /// Feasible forward shift of `later`.
    pub forward: f64,
}

impl ConflictWorkItem {
    pub fn resolvable(&self) -> bool {
        self.forward + self.backward >= self.overlap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalSearchConfig {
    /// Safety cap on conflict-queue pops per invocation.
    pub max_pops: usize,
    /// Keep working through the current queue after an accepted move and
    /// rebuild only when it runs dry, instead of rebuilding immediately.
    pub incremental_queue: bool,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            max_pops: 1_000_000,
            incremental_queue: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LocalSearchStats {
    pub pops: usize,
    pub attempts: usize,
    pub accepted: usize,
    pub capped: bool,
}

pub fn analyze_conflict(inst: &Instance, sched: &Schedule, c: &Conflict) -> ConflictWorkItem {
    let pe = inst.position(c.earlier, c.arc).expect("earlier trip on arc");
    let pl = inst.position(c.later, c.arc).expect("later trip on arc");
    let overlap = sched.exit(inst, c.earlier, pe) - sched.entry[c.later][pl] + inst.epsilon();
    let backward = sched.start_shift[c.earlier].min(overlap).max(0.0);
    let forward = (inst.trip(c.later).max_stagger - sched.start_shift[c.later])
        .min(overlap)
        .max(0.0);
    ConflictWorkItem {
        earlier: c.earlier,
        later: c.later,
        arc: c.arc,
        overlap,
        backward,
        forward,
    }
}

/// Applies the minimum staggering that separates the two trips and
/// re-evaluates the affected part of the schedule. The later trip moves
/// forward by up to its slack; any remainder moves the earlier trip back.
pub fn resolve_conflict(inst: &Instance, sched: &Schedule, item: &ConflictWorkItem) -> Result<Schedule> {
    if !item.resolvable() {
        return Err(Error::Validation(format!(
            "conflict of trips {} and {} cannot absorb overlap {}",
            inst.trip_id(item.earlier),
            inst.trip_id(item.later),
            item.overlap
        )));
    }
    let later_budget = inst.trip(item.later).max_stagger;
    let changed = if item.forward >= item.overlap {
        vec![(item.later, (sched.start_shift[item.later] + item.overlap).min(later_budget))]
    } else {
        let back = item.overlap - item.forward;
        vec![
            (item.later, (sched.start_shift[item.later] + item.forward).min(later_budget)),
            (item.earlier, (sched.start_shift[item.earlier] - back).max(0.0)),
        ]
    };
    repropagate(inst, sched, &changed)
}

/// Greedy conflict repair. From an on-time schedule every accepted move
/// keeps the deadlines and lowers the total delay; from a late one, moves
/// that cut the lateness are taken first.
pub fn local_search(inst: &Instance, sched: Schedule) -> Schedule {
    local_search_with(inst, sched, &LocalSearchConfig::default(), None).0
}

/// [`local_search`] with options. `observer` sees every accepted schedule.
pub fn local_search_with(
    inst: &Instance,
    mut sched: Schedule,
    cfg: &LocalSearchConfig,
    mut observer: Option<&mut dyn FnMut(&Schedule)>,
) -> (Schedule, LocalSearchStats) {
    let mut stats = LocalSearchStats::default();
    let mut late = lateness(inst, &sched);
    let mut queue = find_conflicts(inst, &sched);
    let mut next = 0usize;
    let mut dirty = false;
    loop {
        if next >= queue.len() {
            if cfg.incremental_queue && dirty {
                queue = find_conflicts(inst, &sched);
                next = 0;
                dirty = false;
                continue;
            }
            break;
        }
        if stats.pops >= cfg.max_pops {
            stats.capped = true;
            break;
        }
        let c = queue[next];
        next += 1;
        stats.pops += 1;
        // queued items can be stale in incremental mode
        if cfg.incremental_queue && !still_conflicting(inst, &sched, &c) {
            continue;
        }
        let item = analyze_conflict(inst, &sched, &c);
        if !item.resolvable() {
            continue;
        }
        stats.attempts += 1;
        let Ok(cand) = resolve_conflict(inst, &sched, &item) else {
            continue;
        };
        let cand_late = lateness(inst, &cand);
        if improves((cand_late, cand.total_delay), (late, sched.total_delay)) {
            sched = cand;
            late = cand_late;
            stats.accepted += 1;
            if let Some(obs) = observer.as_mut() {
                obs(&sched);
            }
            if cfg.incremental_queue {
                dirty = true;
            } else {
                queue = find_conflicts(inst, &sched);
                next = 0;
            }
        }
    }
    debug!(
        "local search: {} pops, {} attempts, {} accepted, total delay {:.6}",
        stats.pops, stats.attempts, stats.accepted, sched.total_delay
    );
    (sched, stats)
}

/// Lexicographic on (lateness, total delay): an on-time schedule only
/// yields to an on-time one with less delay.
fn improves(cand: (f64, f64), cur: (f64, f64)) -> bool {
    let ((cl, cd), (sl, sd)) = (cand, cur);
    cl < sl - IMPROVEMENT_TOL || (cl <= sl && cd < sd - IMPROVEMENT_TOL)
}

fn still_conflicting(inst: &Instance, sched: &Schedule, c: &Conflict) -> bool {
    let pe = inst.position(c.earlier, c.arc).expect("trip on arc");
    let pl = inst.position(c.later, c.arc).expect("trip on arc");
    let xl = sched.entry[c.later][pl];
    sched.delay[c.later][pl] > 0.0 && sched.entry[c.earlier][pe] <= xl && xl < sched.exit(inst, c.earlier, pe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{construct_schedule, StaggerVector};
    use crate::instance::{Arc, ArcKind, TravelTimeFunction, Trip};

    /// One arc with T=10 where any other trip on it costs one second.
    fn pair(releases: [f64; 2], budgets: [f64; 2]) -> Instance {
        let arc = Arc {
            tail: 0,
            head: 1,
            ttf: TravelTimeFunction::single(10.0, 2.0, 0.5).unwrap(),
            kind: ArcKind::Original,
        };
        let trips = (0..2)
            .map(|i| {
                (
                    format!("t{i}"),
                    Trip {
                        route: vec![0],
                        release: releases[i],
                        deadline: 100.0,
                        max_stagger: budgets[i],
                    },
                )
            })
            .collect();
        Instance::new(vec!["u".into(), "v".into()], vec![("a".into(), arc)], trips, 0.01).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn forward_shift_alone() {
        let inst = pair([0.0, 8.0], [0.0, 5.0]);
        let s = construct_schedule(&inst, &StaggerVector::zeros(2)).unwrap();
        assert_eq!(s.total_delay, 1.0);
        let c = find_conflicts(&inst, &s);
        let item = analyze_conflict(&inst, &s, &c[0]);
        assert!(close(item.overlap, 2.01));
        assert!(close(item.forward, 2.01) && item.backward == 0.0);
        let out = resolve_conflict(&inst, &s, &item).unwrap();
        assert!(close(out.start_shift[1], 2.01));
        assert_eq!(out.start_shift[0], 0.0);
        assert_eq!(out.total_delay, 0.0);
    }

    #[test]
    fn forward_and_backward_shift() {
        let inst = pair([10.0, 19.5], [2.0, 1.0]);
        let v = StaggerVector::new(&inst, vec![1.5, 0.0]).unwrap();
        let s = construct_schedule(&inst, &v).unwrap();
        let item = analyze_conflict(&inst, &s, &find_conflicts(&inst, &s)[0]);
        assert!(close(item.overlap, 2.01));
        assert!(close(item.forward, 1.0) && close(item.backward, 1.5));
        let out = resolve_conflict(&inst, &s, &item).unwrap();
        assert!(close(out.start_shift[1], 1.0));
        assert!(close(out.start_shift[0], 1.5 - 1.01));
        assert_eq!(out.total_delay, 0.0);
    }

    #[test]
    fn unresolvable_conflict_is_rejected() {
        let inst = pair([0.0, 8.0], [0.0, 1.0]);
        let s = construct_schedule(&inst, &StaggerVector::zeros(2)).unwrap();
        let item = analyze_conflict(&inst, &s, &find_conflicts(&inst, &s)[0]);
        assert!(!item.resolvable());
        assert!(resolve_conflict(&inst, &s, &item).is_err());
        let out = local_search(&inst, s.clone());
        assert_eq!(out, s);
    }

    #[test]
    fn conflict_free_schedule_untouched() {
        let inst = pair([0.0, 20.0], [5.0, 5.0]);
        let s = construct_schedule(&inst, &StaggerVector::zeros(2)).unwrap();
        let mut seen = 0;
        let mut obs = |_: &Schedule| seen += 1;
        let (out, stats) = local_search_with(&inst, s.clone(), &LocalSearchConfig::default(), Some(&mut obs));
        assert_eq!(out, s);
        assert_eq!((stats.pops, seen), (0, 0));
    }

    #[test]
    fn search_removes_avoidable_delay() {
        for incremental_queue in [false, true] {
            let inst = pair([0.0, 8.0], [0.0, 5.0]);
            let s = construct_schedule(&inst, &StaggerVector::zeros(2)).unwrap();
            let cfg = LocalSearchConfig {
                incremental_queue,
                ..Default::default()
            };
            let (out, stats) = local_search_with(&inst, s, &cfg, None);
            assert_eq!(out.total_delay, 0.0);
            assert_eq!(stats.accepted, 1);
        }
    }
}
