//! Rolling-horizon driver.
//!
//! Trips are batched by release time into half-open epochs of length δ and
//! staggered epoch by epoch. Decisions are never revisited. Trips still on
//! the road at the start of an epoch join its model with their departure
//! fixed; the traversals of finished trips that interact with them are
//! replayed as single-arc dummy trips without slack.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::engine::{construct_schedule, lateness, validate_schedule, Schedule, StaggerVector};
use crate::error::{Error, Result};
use crate::instance::{ArcIndex, Instance, Trip, TripIndex};
use crate::matheuristic::{run_matheuristic, MatheuristicConfig, MatheuristicResult};
use crate::milp::SolverAdapter;
use crate::preprocessing::arrival_bounds;

pub const DEFAULT_EPOCH_LENGTH: f64 = 360.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineConfig {
    /// Epoch length δ in seconds; `f64::INFINITY` gives a single epoch.
    pub epoch_length: f64,
    /// Matheuristic settings; `time_limit` applies per epoch.
    pub inner: MatheuristicConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            epoch_length: DEFAULT_EPOCH_LENGTH,
            inner: MatheuristicConfig {
                time_limit: DEFAULT_EPOCH_LENGTH,
                ..MatheuristicConfig::default()
            },
        }
    }
}

/// Trips of one epoch together with the carried-over context.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochPlan {
    pub epoch: i64,
    pub start: f64,
    /// Trips released in `[start, start + δ)`.
    pub trips: Vec<TripIndex>,
    /// Earlier trips still travelling at `start`.
    pub transfer: Vec<TripIndex>,
    /// (source trip, arc) traversals replayed as dummies.
    pub dummies: Vec<(TripIndex, ArcIndex)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: i64,
    pub trips: usize,
    pub transfer: usize,
    pub dummy: usize,
    pub ub: f64,
    pub lb: f64,
    pub elapsed: f64,
    /// Stitched schedule needed the fallback to zero shifts.
    pub repaired: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OnlineResult {
    #[serde(skip)]
    pub schedule: Schedule,
    pub shifts: Vec<f64>,
    pub total_delay: f64,
    /// Sum over trips of their delay in the last epoch model they appeared in.
    pub epoch_implied_delay: f64,
    pub feasible: bool,
    pub epochs: Vec<EpochRecord>,
}

/// Groups trips into half-open epochs `[kδ, (k+1)δ)`, in increasing `k`.
pub fn epoch_partition(inst: &Instance, delta: f64) -> Result<BTreeMap<i64, Vec<TripIndex>>> {
    if !(delta > 0.0) {
        return Err(Error::Validation(format!("epoch length must be positive, got {delta}")));
    }
    let mut out: BTreeMap<i64, Vec<TripIndex>> = BTreeMap::new();
    for (r, t) in inst.trips().iter().enumerate() {
        let k = if delta.is_infinite() { 0 } else { (t.release / delta).floor() as i64 };
        out.entry(k).or_default().push(r);
    }
    Ok(out)
}

/// Runs the matheuristic epoch by epoch and stitches the decisions.
pub fn run_online(
    inst: &Instance,
    cfg: &OnlineConfig,
    adapter: Option<&dyn SolverAdapter>,
) -> Result<OnlineResult> {
    let delta = cfg.epoch_length;
    let epochs = epoch_partition(inst, delta)?;
    let mut shifts = vec![0.0; inst.num_trips()];
    let mut fixed: Vec<TripIndex> = Vec::new();
    let mut last_delay = vec![0.0; inst.num_trips()];
    let mut records = Vec::new();

    for (&k, new_trips) in &epochs {
        let clock = Instant::now();
        let start = if delta.is_infinite() { f64::NEG_INFINITY } else { k as f64 * delta };
        let (sub, stitched) = restrict(inst, &fixed, &shifts)?;
        let plan = plan_epoch(k, start, new_trips, &fixed, &sub, &stitched);

        let res = solve_epoch(inst, &plan, &shifts, &fixed, &sub, &stitched, cfg, adapter)?;
        for (i, &r) in plan.trips.iter().enumerate() {
            shifts[r] = res.shifts[i];
        }
        fixed.extend(&plan.trips);
        fixed.sort_unstable();
        for (i, &r) in plan.trips.iter().chain(&plan.transfer).enumerate() {
            last_delay[r] = res.schedule.delay[i].iter().sum();
        }

        let mut repaired = false;
        let (sub, stitched) = restrict(inst, &fixed, &shifts)?;
        if !validate_schedule(&sub, &stitched).is_feasible() {
            warn!("epoch {k}: stitched schedule infeasible, trying zero shifts for its trips");
            let kept: Vec<f64> = plan.trips.iter().map(|&r| shifts[r]).collect();
            for &r in &plan.trips {
                shifts[r] = 0.0;
            }
            let (zsub, zero) = restrict(inst, &fixed, &shifts)?;
            if lateness(&zsub, &zero) < lateness(&sub, &stitched) {
                repaired = true;
            } else {
                for (&r, &v) in plan.trips.iter().zip(&kept) {
                    shifts[r] = v;
                }
            }
            if !validate_schedule(&zsub, &zero).is_feasible() {
                warn!("epoch {k}: no on-time schedule found");
            }
        }
        let rec = EpochRecord {
            epoch: k,
            trips: plan.trips.len(),
            transfer: plan.transfer.len(),
            dummy: plan.dummies.len(),
            ub: res.upper_bound,
            lb: res.lower_bound,
            elapsed: clock.elapsed().as_secs_f64(),
            repaired,
        };
        info!(
            "epoch {k}: {} trips, {} transfer, {} dummy, UB {:.3}, LB {:.3}",
            rec.trips, rec.transfer, rec.dummy, rec.ub, rec.lb
        );
        records.push(rec);
    }

    // the full re-evaluation is authoritative
    let schedule = construct_schedule(inst, &StaggerVector::from_vec_unchecked(shifts.clone()))?;
    let feasible = validate_schedule(inst, &schedule).is_feasible();
    if !feasible {
        warn!("online schedule violates the full instance");
    }
    Ok(OnlineResult {
        total_delay: schedule.total_delay,
        epoch_implied_delay: last_delay.iter().sum(),
        shifts,
        schedule,
        feasible,
        epochs: records,
    })
}

/// Instance with only the `fixed` trips and their schedule.
fn restrict(inst: &Instance, fixed: &[TripIndex], shifts: &[f64]) -> Result<(Instance, Schedule)> {
    let trips = fixed.iter().map(|&r| (inst.trip_id(r).to_string(), inst.trip(r).clone())).collect();
    let sub = inst.with_trips(trips)?;
    let v = StaggerVector::from_vec_unchecked(fixed.iter().map(|&r| shifts[r]).collect());
    let sched = construct_schedule(&sub, &v)?;
    Ok((sub, sched))
}

fn plan_epoch(
    epoch: i64,
    start: f64,
    new_trips: &[TripIndex],
    fixed: &[TripIndex],
    sub: &Instance,
    stitched: &Schedule,
) -> EpochPlan {
    let transfer_local: Vec<usize> = (0..fixed.len())
        .filter(|&i| stitched.arrival(sub, i) > start)
        .collect();
    let is_transfer: BTreeSet<usize> = transfer_local.iter().copied().collect();

    // Finished traversals that feed the flow of a transfer traversal, closed
    // under "feeds the flow of a member" on the same arc, so that the epoch
    // model reproduces every transfer trip's timing exactly.
    let mut dummies = Vec::new();
    let arcs: BTreeSet<ArcIndex> = transfer_local
        .iter()
        .flat_map(|&i| sub.trip(i).route.iter().copied())
        .collect();
    for a in arcs {
        let on_arc = sub.trips_on_arc(a);
        let span = |i: usize| {
            let p = sub.position(i, a).expect("trip on arc");
            (stitched.entry[i][p], stitched.exit(sub, i, p))
        };
        let mut members: Vec<usize> = on_arc.iter().copied().filter(|i| is_transfer.contains(i)).collect();
        let mut chosen = BTreeSet::new();
        while let Some(m) = members.pop() {
            let (xm, _) = span(m);
            for &o in on_arc {
                if is_transfer.contains(&o) || chosen.contains(&o) {
                    continue;
                }
                let (xo, eo) = span(o);
                if xo <= xm && xm < eo {
                    chosen.insert(o);
                    members.push(o);
                }
            }
        }
        dummies.extend(chosen.into_iter().map(|o| (fixed[o], a)));
    }
    dummies.sort_unstable();

    EpochPlan {
        epoch,
        start,
        trips: new_trips.to_vec(),
        transfer: transfer_local.iter().map(|&i| fixed[i]).collect(),
        dummies,
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_epoch(
    inst: &Instance,
    plan: &EpochPlan,
    shifts: &[f64],
    fixed: &[TripIndex],
    sub: &Instance,
    stitched: &Schedule,
    cfg: &OnlineConfig,
    adapter: Option<&dyn SolverAdapter>,
) -> Result<MatheuristicResult> {
    if plan.transfer.is_empty() && plan.dummies.is_empty() && plan.trips.len() == inst.num_trips() {
        // a single epoch is the offline problem itself
        return run_matheuristic(inst, &cfg.inner, adapter);
    }
    let local = |r: TripIndex| fixed.binary_search(&r).expect("fixed trip");
    let build = |relax: bool| -> Result<Instance> {
        let mut trips: Vec<(String, Trip)> = Vec::new();
        for &r in &plan.trips {
            trips.push((inst.trip_id(r).to_string(), inst.trip(r).clone()));
        }
        for &r in &plan.transfer {
            let t = inst.trip(r);
            let arrival = stitched.arrival(sub, local(r));
            let deadline = if relax {
                t.deadline.max(arrival) + inst.route_nominal(r)
            } else {
                t.deadline
            };
            trips.push((
                inst.trip_id(r).to_string(),
                Trip {
                    route: t.route.clone(),
                    release: t.release + shifts[r],
                    deadline,
                    max_stagger: 0.0,
                },
            ));
        }
        for &(r, a) in &plan.dummies {
            let i = local(r);
            let p = sub.position(i, a).expect("trip on arc");
            trips.push((
                format!("dummy:{}@{}", inst.trip_id(r), inst.arc_id(a)),
                Trip {
                    route: vec![a],
                    release: stitched.entry[i][p],
                    deadline: stitched.exit(sub, i, p),
                    max_stagger: 0.0,
                },
            ));
        }
        inst.with_trips(trips)
    };
    let strict = build(false)?;
    match run_matheuristic(&strict, &cfg.inner, adapter) {
        Err(Error::Infeasible(msg)) => {
            warn!("epoch {}: {msg}; relaxing transfer deadlines", plan.epoch);
            let relaxed = build(true)?;
            match run_matheuristic(&relaxed, &cfg.inner, adapter) {
                Err(Error::Infeasible(msg)) => {
                    // earlier commitments leave no on-time completion
                    warn!("epoch {}: {msg}; relaxing all deadlines", plan.epoch);
                    run_matheuristic(&relaxed.with_deadlines(&arrival_bounds(&relaxed))?, &cfg.inner, adapter)
                }
                other => other,
            }
        }
        other => other,
    }
}

/// Writes the per-epoch log as CSV `epoch,trips,transfer,dummy,ub_s,lb_s,elapsed_s`.
pub fn write_epoch_log<W: Write>(log: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "trips", "transfer", "dummy", "ub_s", "lb_s", "elapsed_s"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.trips.to_string(),
            e.transfer.to_string(),
            e.dummy.to_string(),
            e.ub.to_string(),
            e.lb.to_string(),
            format!("{:.3}", e.elapsed),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<epoch log>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Arc, ArcKind, TravelTimeFunction};

    fn arc(tail: usize, head: usize, nominal: f64) -> Arc {
        Arc {
            tail,
            head,
            ttf: TravelTimeFunction::single(nominal, 2.0, 0.5).unwrap(),
            kind: ArcKind::Original,
        }
    }

    /// Arcs a (T=10) and b (T=100); `o` and `r` share a, `r` and `n` share b.
    fn carry_over() -> Instance {
        let trip = |route: Vec<usize>, release: f64, budget: f64| Trip {
            route,
            release,
            deadline: 400.0,
            max_stagger: budget,
        };
        Instance::new(
            vec!["u".into(), "v".into(), "w".into()],
            vec![("a".into(), arc(0, 1, 10.0)), ("b".into(), arc(1, 2, 100.0))],
            vec![
                ("o".into(), trip(vec![0], 0.0, 0.0)),
                ("r".into(), trip(vec![0, 1], 1.0, 0.0)),
                ("n".into(), trip(vec![1], 60.0, 5.0)),
            ],
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn boundary_release_goes_to_next_epoch() {
        let inst = carry_over();
        let p = epoch_partition(&inst, 60.0).unwrap();
        assert_eq!(p[&0], vec![0, 1]);
        assert_eq!(p[&1], vec![2]);
        assert_eq!(epoch_partition(&inst, f64::INFINITY).unwrap().len(), 1);
        assert!(epoch_partition(&inst, 0.0).is_err());
    }

    #[test]
    fn transfer_and_dummy_reproduce_full_evaluation() {
        let inst = carry_over();
        let cfg = OnlineConfig {
            epoch_length: 50.0,
            ..Default::default()
        };
        let res = run_online(&inst, &cfg, None).unwrap();
        assert_eq!(res.epochs.len(), 2);
        let e1 = &res.epochs[1];
        assert_eq!((e1.trips, e1.transfer, e1.dummy), (1, 1, 1));
        assert!(res.feasible);
        // r is slowed by o on a, n by r on b unless n waits long enough
        assert_eq!(res.schedule.flow[1][0], 1);
        let full = construct_schedule(&inst, &StaggerVector::from_vec_unchecked(res.shifts.clone())).unwrap();
        assert_eq!(full.total_delay, res.total_delay);
        assert!((res.epoch_implied_delay - res.total_delay).abs() < 1e-6);
    }

    #[test]
    fn infinite_epoch_matches_offline() {
        let inst = carry_over();
        let cfg = OnlineConfig {
            epoch_length: f64::INFINITY,
            ..Default::default()
        };
        let on = run_online(&inst, &cfg, None).unwrap();
        let off = run_matheuristic(&inst, &cfg.inner, None).unwrap();
        assert_eq!(on.shifts, off.shifts);
        assert_eq!(on.schedule, off.schedule);
        assert_eq!(on.epochs.len(), 1);
    }

    #[test]
    fn epoch_log_csv() {
        let inst = carry_over();
        let res = run_online(&inst, &OnlineConfig { epoch_length: 50.0, ..Default::default() }, None).unwrap();
        let mut buf = Vec::new();
        write_epoch_log(&res.epochs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,trips,transfer,dummy,ub_s,lb_s,elapsed_s\n0,2,0,0,"));
        assert_eq!(text.lines().count(), 3);
    }
}
