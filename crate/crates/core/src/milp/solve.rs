use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};

use super::adapter::{write_values, SolveStatus, SolverAdapter};
use super::model::MilpModel;
use crate::engine::{construct_schedule, validate_schedule, Schedule, StaggerVector};
use crate::error::{Error, Result};
use crate::preprocessing::ReducedInstance;

/// Result of one solver call on a reduced instance.
#[derive(Debug, Clone)]
pub struct MilpOutcome {
    pub status: SolveStatus,
    /// Decoded shifts of the reduced trips.
    pub shifts: Option<StaggerVector>,
    /// Engine evaluation of `shifts` on the reduced instance.
    pub schedule: Option<Schedule>,
    /// Objective reported by the solver.
    pub objective: Option<f64>,
    pub adapter_bound: Option<f64>,
    /// `max(adapter_bound, initial_lb)`.
    pub bound: f64,
    pub elapsed: f64,
}

/// Writes the model as LP text.
pub fn emit_model(model: &MilpModel, path: &Path) -> Result<()> {
    fs::write(path, model.lp.to_lp_string()).map_err(|e| Error::io(path, e))
}

/// Solves `model` once within `time_limit` seconds, optionally warm started
/// from a schedule of the reduced instance. Scratch files go to `workdir`.
pub fn solve(
    model: &MilpModel,
    red: &ReducedInstance,
    warm: Option<&Schedule>,
    adapter: &dyn SolverAdapter,
    time_limit: f64,
    initial_lb: f64,
    workdir: &Path,
) -> Result<MilpOutcome> {
    let start = Instant::now();
    let inst = &red.instance;
    if inst.num_trips() == 0 {
        return Ok(MilpOutcome {
            status: SolveStatus::Optimal,
            shifts: Some(StaggerVector::zeros(0)),
            schedule: Some(construct_schedule(inst, &StaggerVector::zeros(0))?),
            objective: Some(0.0),
            adapter_bound: None,
            bound: initial_lb.max(0.0),
            elapsed: 0.0,
        });
    }
    fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let model_path = workdir.join("model.lp");
    let sol_path = workdir.join("model.sol");
    emit_model(model, &model_path)?;

    let warm_path = workdir.join("warm.txt");
    let warm_used = match warm {
        Some(s) if adapter.capabilities().warmstart => {
            let values = model.encode(red, s);
            let viol = model.lp.max_violation(&values);
            if viol > 1e-6 {
                warn!("warm start violates the model by {viol:.3e}");
            }
            let names = model.lp.vars.iter().map(|v| v.name.as_str());
            fs::write(&warm_path, write_values(names, &values)).map_err(|e| Error::io(&warm_path, e))?;
            Some(warm_path.as_path())
        }
        _ => None,
    };

    let raw = adapter.run(&model_path, warm_used, time_limit, &sol_path)?;
    let adapter_bound = raw.bound;
    let bound = adapter_bound.unwrap_or(f64::NEG_INFINITY).max(initial_lb);
    info!(
        "solver {}: status {:?}, objective {:?}, adapter bound {:?}, initial LB {initial_lb}",
        adapter.name(),
        raw.status,
        raw.objective,
        adapter_bound
    );

    let (shifts, schedule) = if raw.has_incumbent() {
        let values: Vec<f64> = model
            .lp
            .vars
            .iter()
            .map(|v| raw.values.get(&v.name).copied().unwrap_or(v.lb))
            .collect();
        let shifts = StaggerVector::from_vec_unchecked(model.decode_shifts(red, &values));
        let sched = construct_schedule(inst, &shifts)?;
        let report = validate_schedule(inst, &sched);
        if !report.is_feasible() {
            return Err(Error::Decode(format!(
                "{} violation(s), first: {:?}",
                report.violations.len(),
                report.violations[0]
            )));
        }
        (Some(shifts), Some(sched))
    } else {
        (None, None)
    };

    Ok(MilpOutcome {
        status: raw.status,
        shifts,
        schedule,
        objective: raw.objective,
        adapter_bound,
        bound,
        elapsed: start.elapsed().as_secs_f64(),
    })
}
