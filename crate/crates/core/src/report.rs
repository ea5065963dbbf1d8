//! Run metrics, instance statistics and the staggering-budget sweep.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{construct_schedule, Schedule, StaggerVector};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::matheuristic::{run_matheuristic, MatheuristicConfig};
use crate::milp::SolverAdapter;
use crate::preprocessing::Preprocessed;

/// Largest budget fraction accepted by the sweep.
pub const MAX_ZETA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcMetrics {
    pub arc: String,
    /// Cumulative delay on the arc.
    pub delay: f64,
    /// Trips delayed on the arc.
    pub delayed_trips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub count: usize,
    pub shifted: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl ShiftSummary {
    pub fn of(shifts: &[f64]) -> ShiftSummary {
        let mut v = shifts.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if v.is_empty() {
                0.0
            } else {
                v[((v.len() - 1) as f64 * p).round() as usize]
            }
        };
        ShiftSummary {
            count: v.len(),
            shifted: v.iter().filter(|&&s| s > 0.0).count(),
            min: v.first().copied().unwrap_or(0.0),
            mean: if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 },
            median: q(0.5),
            p90: q(0.9),
            max: v.last().copied().unwrap_or(0.0),
        }
    }
}

/// Summary of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub trips: usize,
    pub uncontrolled: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    /// `(UB - LB) / UB`, zero when UB is zero.
    pub gap: f64,
    /// `(Z_unc - UB) / Z_unc`, absent when the uncontrolled delay is zero.
    pub reduction: Option<f64>,
    pub status: String,
    pub elapsed: f64,
    pub arcs: Vec<ArcMetrics>,
    pub shifts: ShiftSummary,
}

pub fn relative_gap(ub: f64, lb: f64) -> f64 {
    if ub > 0.0 {
        (ub - lb) / ub
    } else {
        0.0
    }
}

pub fn delay_reduction(uncontrolled: f64, ub: f64) -> Option<f64> {
    (uncontrolled > 0.0).then(|| (uncontrolled - ub) / uncontrolled)
}

/// Per-arc cumulative delay and delayed-trip counts, for arcs with delay.
pub fn arc_metrics(inst: &Instance, sched: &Schedule) -> Vec<ArcMetrics> {
    let mut delay = vec![0.0; inst.num_arcs()];
    let mut count = vec![0usize; inst.num_arcs()];
    for (r, t) in inst.trips().iter().enumerate() {
        for (p, &a) in t.route.iter().enumerate() {
            let d = sched.delay[r][p];
            if d > 0.0 {
                delay[a] += d;
                count[a] += 1;
            }
        }
    }
    (0..inst.num_arcs())
        .filter(|&a| count[a] > 0)
        .map(|a| ArcMetrics {
            arc: inst.arc_id(a).to_string(),
            delay: delay[a],
            delayed_trips: count[a],
        })
        .collect()
}

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        inst: &Instance,
        mode: &str,
        sched: &Schedule,
        uncontrolled: f64,
        lower_bound: f64,
        status: &str,
        elapsed: f64,
    ) -> RunReport {
        let ub = sched.total_delay;
        RunReport {
            mode: mode.to_string(),
            trips: inst.num_trips(),
            uncontrolled,
            upper_bound: ub,
            lower_bound,
            gap: relative_gap(ub, lower_bound),
            reduction: delay_reduction(uncontrolled, ub),
            status: status.to_string(),
            elapsed,
            arcs: arc_metrics(inst, sched),
            shifts: ShiftSummary::of(&sched.start_shift),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub trips: usize,
    pub arcs: usize,
    pub uncontrolled: f64,
    pub initial_lb: f64,
    /// Conflicting arcs of the reduced instance.
    pub conflicting_arcs: usize,
    /// Largest number of trips on a single conflicting arc.
    pub max_trips_per_conflicting_arc: usize,
    /// Trips without any conflicting arc.
    pub removed_trips: usize,
}

pub fn instance_stats(inst: &Instance, pre: &Preprocessed) -> Result<InstanceStats> {
    let unc = construct_schedule(inst, &StaggerVector::zeros(inst.num_trips()))?;
    let red = &pre.reduced;
    Ok(InstanceStats {
        trips: inst.num_trips(),
        arcs: inst.num_arcs(),
        uncontrolled: unc.total_delay,
        initial_lb: pre.windows.initial_lb,
        conflicting_arcs: red.conflicting_arcs.len(),
        max_trips_per_conflicting_arc: red
            .conflicting_arcs
            .iter()
            .map(|&a| red.instance.trips_on_arc(a).len())
            .max()
            .unwrap_or(0),
        removed_trips: red.num_removed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub zeta: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub uncontrolled: f64,
    pub shifts: ShiftSummary,
}

/// Copy of `inst` where every budget is `zeta` times the trip's free-flow
/// travel time.
pub fn with_zeta(inst: &Instance, zeta: f64) -> Result<Instance> {
    if !(0.0..=MAX_ZETA).contains(&zeta) {
        return Err(Error::Validation(format!("zeta must lie in [0, {MAX_ZETA}], got {zeta}")));
    }
    inst.with_budgets(|r, _| zeta * inst.route_nominal(r))
}

/// One point of the budget sweep.
pub fn sweep_point(
    inst: &Instance,
    zeta: f64,
    cfg: &MatheuristicConfig,
    adapter: Option<&dyn SolverAdapter>,
) -> Result<SweepRow> {
    let scaled = with_zeta(inst, zeta)?;
    let res = run_matheuristic(&scaled, cfg, adapter)?;
    Ok(SweepRow {
        zeta,
        upper_bound: res.upper_bound,
        lower_bound: res.lower_bound,
        uncontrolled: res.uncontrolled,
        shifts: ShiftSummary::of(&res.shifts),
    })
}

pub fn sweep_zeta(
    inst: &Instance,
    zetas: &[f64],
    cfg: &MatheuristicConfig,
    adapter: Option<&dyn SolverAdapter>,
) -> Result<Vec<SweepRow>> {
    zetas.iter().map(|&z| sweep_point(inst, z, cfg, adapter)).collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "zeta",
        "ub_s",
        "lb_s",
        "uncontrolled_s",
        "shifted_trips",
        "mean_shift_s",
        "median_shift_s",
        "p90_shift_s",
        "max_shift_s",
    ])?;
    for r in rows {
        w.write_record([
            r.zeta.to_string(),
            r.upper_bound.to_string(),
            r.lower_bound.to_string(),
            r.uncontrolled.to_string(),
            r.shifts.shifted.to_string(),
            r.shifts.mean.to_string(),
            r.shifts.median.to_string(),
            r.shifts.p90.to_string(),
            r.shifts.max.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}
