//! Construction, greedy local search and the alternation with the MILP.

mod local_search;

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

pub use local_search::{
    analyze_conflict, local_search, local_search_with, resolve_conflict, ConflictWorkItem, LocalSearchConfig,
    LocalSearchStats, IMPROVEMENT_TOL,
};

use crate::engine::{construct_schedule, meets_time_windows, validate_schedule, Schedule, StaggerVector};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::milp::{build_model_with, solve, ModelOptions, SolveStatus, SolverAdapter};
use crate::preprocessing::{preprocess, Preprocessed};

/// Gap below which the incumbent counts as matching the bound.
pub const OPTIMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatheuristicConfig {
    /// Overall time limit in seconds.
    pub time_limit: f64,
    /// Solver time per MILP slice in seconds.
    pub milp_slice: f64,
    /// Window passes; 0 iterates to a fixpoint.
    pub passes: usize,
    pub use_milp: bool,
    /// Run local search on every MILP incumbent.
    pub ls_on_incumbent: bool,
    /// Build the MILP with exact delay rows, see [`ModelOptions`].
    pub exact_delay: bool,
    pub local_search: LocalSearchConfig,
    /// Scratch directory for solver files; a temporary one when unset.
    pub workdir: Option<PathBuf>,
}

impl Default for MatheuristicConfig {
    fn default() -> Self {
        MatheuristicConfig {
            time_limit: 60.0,
            milp_slice: 30.0,
            passes: 1,
            use_milp: true,
            ls_on_incumbent: true,
            exact_delay: true,
            local_search: LocalSearchConfig::default(),
            workdir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Construct,
    LocalSearch,
    Milp,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Construct => "construct",
            Phase::LocalSearch => "local_search",
            Phase::Milp => "milp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub phase: Phase,
    pub ub: f64,
    pub lb: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Incumbent matches the bound.
    Optimal,
    /// Time limit reached or the solver stopped improving.
    Feasible,
    /// MILP disabled by configuration.
    Heuristic,
    /// Solver unavailable or failing; result comes from local search.
    Degraded,
    /// No schedule meeting every deadline was found; the result is the
    /// least late one.
    Infeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatheuristicResult {
    #[serde(skip)]
    pub schedule: Schedule,
    pub shifts: Vec<f64>,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub initial_lb: f64,
    pub uncontrolled: f64,
    pub status: RunStatus,
    /// Whether the schedule meets every deadline.
    pub feasible: bool,
    pub conflicting_arcs: usize,
    pub reduced_trips: usize,
    pub log: Vec<IterationRecord>,
    pub elapsed: f64,
}

struct Tracker {
    start: Instant,
    log: Vec<IterationRecord>,
    ub: f64,
    lb: f64,
}

impl Tracker {
    fn record(&mut self, iter: usize, phase: Phase) {
        self.log.push(IterationRecord {
            iter,
            phase,
            ub: self.ub,
            lb: self.lb,
            elapsed: self.start.elapsed().as_secs_f64(),
        });
    }

    fn done(&self) -> bool {
        self.ub <= self.lb + OPTIMALITY_TOL
    }
}

/// Total delay of an on-time schedule; a late one bounds nothing.
fn upper_bound(inst: &Instance, s: &Schedule) -> f64 {
    if meets_time_windows(inst, s) {
        s.total_delay
    } else {
        f64::INFINITY
    }
}

static SCRATCH: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir(cfg: &MatheuristicConfig) -> (PathBuf, bool) {
    match &cfg.workdir {
        Some(d) => (d.clone(), false),
        None => {
            let n = SCRATCH.fetch_add(1, Ordering::Relaxed);
            (
                std::env::temp_dir().join(format!("stagger-{}-{n}", std::process::id())),
                true,
            )
        }
    }
}

/// Runs the full pipeline on `inst`. Without an adapter, or with
/// `use_milp` off, the result is construction plus local search.
pub fn run_matheuristic(
    inst: &Instance,
    cfg: &MatheuristicConfig,
    adapter: Option<&dyn SolverAdapter>,
) -> Result<MatheuristicResult> {
    let pre = preprocess(inst, cfg.passes)?;
    run_matheuristic_preprocessed(inst, &pre, cfg, adapter)
}

/// As [`run_matheuristic`] with preprocessing already done.
pub fn run_matheuristic_preprocessed(
    inst: &Instance,
    pre: &Preprocessed,
    cfg: &MatheuristicConfig,
    adapter: Option<&dyn SolverAdapter>,
) -> Result<MatheuristicResult> {
    let mut t = Tracker {
        start: Instant::now(),
        log: Vec::new(),
        ub: f64::INFINITY,
        lb: pre.windows.initial_lb,
    };
    let initial = construct_schedule(inst, &StaggerVector::zeros(inst.num_trips()))?;
    let uncontrolled = initial.total_delay;
    t.ub = upper_bound(inst, &initial);
    t.record(0, Phase::Construct);

    let mut best = local_search_with(inst, initial, &cfg.local_search, None).0;
    t.ub = upper_bound(inst, &best);
    t.record(0, Phase::LocalSearch);

    let mut status = if t.done() { RunStatus::Optimal } else { RunStatus::Heuristic };
    match adapter {
        Some(adapter) if cfg.use_milp && status != RunStatus::Optimal => {
            status = milp_loop(inst, pre, cfg, adapter, &mut best, &mut t);
        }
        _ => {}
    }

    let feasible = meets_time_windows(inst, &best);
    if !feasible {
        warn!("no schedule meeting every deadline found");
        status = RunStatus::Infeasible;
    }
    let shifts = best.start_shift.clone();
    Ok(MatheuristicResult {
        upper_bound: best.total_delay,
        lower_bound: t.lb.min(best.total_delay),
        initial_lb: pre.windows.initial_lb,
        uncontrolled,
        status,
        feasible,
        conflicting_arcs: pre.reduced.conflicting_arcs.len(),
        reduced_trips: pre.reduced.instance.num_trips(),
        elapsed: t.start.elapsed().as_secs_f64(),
        log: t.log,
        schedule: best,
        shifts,
    })
}

fn milp_loop(
    inst: &Instance,
    pre: &Preprocessed,
    cfg: &MatheuristicConfig,
    adapter: &dyn SolverAdapter,
    best: &mut Schedule,
    t: &mut Tracker,
) -> RunStatus {
    let red = &pre.reduced;
    let tw = red.project_windows(&pre.windows);
    let opts = ModelOptions {
        exact_delay: cfg.exact_delay,
    };
    let model = match build_model_with(red, &tw, &opts) {
        Ok(m) => m,
        Err(e) => {
            warn!("MILP unavailable, keeping local search result: {e}");
            return RunStatus::Degraded;
        }
    };
    let (dir, temporary) = scratch_dir(cfg);
    let mut status = RunStatus::Feasible;
    let mut iter = 0usize;
    loop {
        let remaining = cfg.time_limit - t.start.elapsed().as_secs_f64();
        if remaining <= 0.0 {
            break;
        }
        iter += 1;
        let warm = construct_schedule(&red.instance, &red.reduce_shifts(&best.shifts())).ok();
        let out = match solve(
            &model,
            red,
            warm.as_ref(),
            adapter,
            cfg.milp_slice.min(remaining),
            t.lb,
            &dir,
        ) {
            Ok(o) => o,
            Err(Error::Decode(msg)) => {
                warn!("MILP incumbent rejected by the evaluator: {msg}");
                status = RunStatus::Feasible;
                break;
            }
            Err(e) => {
                warn!("solver adapter failed, keeping local search result: {e}");
                status = RunStatus::Degraded;
                break;
            }
        };
        t.lb = t.lb.max(out.bound);
        if let Some(shifts) = &out.shifts {
            let lifted = red.lift_shifts(shifts, &best.shifts());
            match construct_schedule(inst, &lifted) {
                Ok(cand) if cand.total_delay < t.ub - IMPROVEMENT_TOL => {
                    if validate_schedule(inst, &cand).is_feasible() {
                        *best = cand;
                    } else {
                        warn!("lifted MILP incumbent is infeasible on the full instance; ignored");
                    }
                }
                Ok(_) => {}
                Err(e) => warn!("lifted MILP incumbent rejected: {e}"),
            }
        }
        t.ub = upper_bound(inst, best);
        t.record(iter, Phase::Milp);
        if t.done() {
            status = RunStatus::Optimal;
            break;
        }
        if cfg.ls_on_incumbent {
            *best = local_search_with(inst, best.clone(), &cfg.local_search, None).0;
            t.ub = upper_bound(inst, best);
            t.record(iter, Phase::LocalSearch);
            if t.done() {
                status = RunStatus::Optimal;
                break;
            }
        }
        match out.status {
            SolveStatus::Optimal => {
                info!("MILP solved to optimality; remaining gap comes from model strictness");
                break;
            }
            SolveStatus::Infeasible => {
                warn!("MILP reported infeasible; keeping heuristic result");
                break;
            }
            _ => {}
        }
    }
    if temporary {
        let _ = std::fs::remove_dir_all(&dir);
    }
    status
}

/// Writes the iteration log as CSV `iter,phase,ub_s,lb_s,elapsed_s`.
pub fn write_iteration_log<W: Write>(log: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "phase", "ub_s", "lb_s", "elapsed_s"])?;
    for r in log {
        w.write_record([
            r.iter.to_string(),
            r.phase.as_str().to_string(),
            r.ub.to_string(),
            r.lb.to_string(),
            format!("{:.3}", r.elapsed),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<iteration log>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Arc, ArcKind, TravelTimeFunction, Trip};
    use crate::milp::{Capabilities, RawSolution};
    use std::path::Path;

    fn one_arc(releases: &[f64], budget: f64) -> Instance {
        let arc = Arc {
            tail: 0,
            head: 1,
            ttf: TravelTimeFunction::single(10.0, 1.0, 1.0).unwrap(),
            kind: ArcKind::Original,
        };
        let trips = releases
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                (
                    format!("t{i}"),
                    Trip {
                        route: vec![0],
                        release: e,
                        deadline: 200.0,
                        max_stagger: budget,
                    },
                )
            })
            .collect();
        Instance::new(vec!["u".into(), "v".into()], vec![("a".into(), arc)], trips, 0.01).unwrap()
    }

    struct Broken;

    impl SolverAdapter for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities::default()
        }
        fn run(&self, _: &Path, _: Option<&Path>, _: f64, _: &Path) -> Result<RawSolution> {
            Err(Error::Adapter("no solver".into()))
        }
    }

    #[test]
    fn local_search_reaches_zero_bound() {
        let inst = one_arc(&[0.0, 2.0, 4.0], 10.0);
        let res = run_matheuristic(&inst, &MatheuristicConfig::default(), None).unwrap();
        assert_eq!(res.uncontrolled, 1.0);
        assert_eq!(res.upper_bound, 0.0);
        assert_eq!(res.status, RunStatus::Optimal);
        assert!(res.lower_bound <= res.upper_bound);
    }

    #[test]
    fn failing_adapter_degrades_gracefully() {
        let inst = one_arc(&[0.0, 1.0, 2.0, 3.0], 3.0);
        let dir = tempfile::tempdir().unwrap();
        let cfg = MatheuristicConfig {
            time_limit: 5.0,
            workdir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let res = run_matheuristic(&inst, &cfg, Some(&Broken)).unwrap();
        assert!(res.upper_bound <= res.uncontrolled);
        assert!(matches!(res.status, RunStatus::Degraded | RunStatus::Optimal));
        assert!(validate_schedule(&inst, &res.schedule).is_feasible());
    }

    #[test]
    fn iteration_log_csv() {
        let inst = one_arc(&[0.0, 2.0, 4.0], 10.0);
        let res = run_matheuristic(&inst, &MatheuristicConfig::default(), None).unwrap();
        let mut buf = Vec::new();
        write_iteration_log(&res.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,phase,ub_s,lb_s,elapsed_s"));
        assert!(lines.next().unwrap().starts_with("0,construct,1,"));
        assert!(lines.next().unwrap().starts_with("0,local_search,0,"));
    }
}
