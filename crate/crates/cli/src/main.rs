mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use stagger::matheuristic::write_iteration_log;
use stagger::milp::{CommandAdapter, SolverAdapter};
use stagger::network::{
    build_instance, contract_graph_keeping, generate_synthetic, read_trip_rows, write_trip_rows, ContractionParams,
    RoadGraph, ScenarioParams,
};
use stagger::online::write_epoch_log;
use stagger::preprocessing::diagnostics_json;
use stagger::report::{instance_stats, sweep_point, with_zeta, write_sweep_csv, RunReport};
use stagger::{
    construct_schedule, load_instance, preprocess, run_matheuristic, run_online, validate_schedule, Instance,
    InstanceFormat, OnlineConfig, StaggerVector,
};

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "stagger", version, about = "Departure staggering against fleet congestion")]
struct Cli {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scenario {
    /// Low congestion.
    Lc,
    /// High congestion.
    Hc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Offline,
    Online,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct SolverFlags {
    /// Overall (offline) or per-epoch (online) time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Solver time per MILP slice in seconds.
    #[arg(long)]
    milp_slice: Option<f64>,
    /// Time-window passes; 0 iterates to a fixpoint.
    #[arg(long)]
    passes: Option<usize>,
    /// Solver adapter descriptor (TOML). Without one, only local search runs.
    #[arg(long)]
    adapter: Option<PathBuf>,
    /// Skip the MILP even when an adapter is configured.
    #[arg(long)]
    no_milp: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic network and trip set.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        trips: Option<usize>,
        #[arg(long)]
        mean_interarrival: Option<f64>,
        #[arg(long)]
        hotspot_intensity: Option<f64>,
        /// Also write a scenario.toml with this preset.
        #[arg(long, value_enum)]
        scenario: Option<Scenario>,
    },
    /// Contract a graph directory, keeping trip endpoints.
    Contract {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of nodes to remove.
        #[arg(long, default_value_t = 0.5)]
        reduction: f64,
        #[arg(long, default_value_t = 500)]
        witness_limit: usize,
    },
    /// Route trips and calibrate arcs into an instance JSON.
    BuildInstance {
        /// Directory with nodes.csv and edges.csv.
        #[arg(long)]
        graph: PathBuf,
        /// Trips CSV; defaults to trips.csv in the graph directory.
        #[arg(long)]
        trips: Option<PathBuf>,
        #[arg(long, value_enum)]
        scenario: Option<Scenario>,
        /// Staggering budget as a fraction of free-flow travel time.
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute time windows, conflicting sets and the reduced instance.
    Preprocess {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        passes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve offline or with the rolling horizon.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "offline")]
        mode: Mode,
        /// Output directory for schedule, shifts, log and report.
        #[arg(long)]
        out: PathBuf,
        /// Epoch length in seconds for online mode.
        #[arg(long)]
        epoch_length: Option<f64>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Solve once per staggering budget fraction.
    SweepZeta {
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated budget fractions in [0, 0.25].
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25])]
        zetas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Print instance statistics as JSON.
    Stats {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Evaluate a shifts CSV (`trip_id,shift_s`) on an instance.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        shifts: PathBuf,
        /// Optional schedule CSV output.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ShiftRow {
    trip_id: String,
    shift_s: f64,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let jobs = cli.jobs.or(file.jobs).unwrap_or(1);
    match cli.cmd {
        Cmd::Generate {
            out,
            rows,
            cols,
            trips,
            mean_interarrival,
            hotspot_intensity,
            scenario,
        } => {
            let mut p = file.synthetic.clone();
            p.rows = rows.unwrap_or(p.rows);
            p.cols = cols.unwrap_or(p.cols);
            p.trips = trips.unwrap_or(p.trips);
            p.mean_interarrival = mean_interarrival.unwrap_or(p.mean_interarrival);
            p.hotspot_intensity = hotspot_intensity.unwrap_or(p.hotspot_intensity);
            let (g, rows) = generate_synthetic(seed, &p)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            g.save_csv(&out)?;
            write_trips(&rows, &out.join("trips.csv"))?;
            if let Some(s) = scenario {
                let params = scenario_params(Some(s), &file);
                fs::write(out.join("scenario.toml"), toml::to_string(&params)?)?;
            }
            println!("{} nodes, {} edges, {} trips -> {}", g.nodes.len(), g.edges.len(), rows.len(), out.display());
        }
        Cmd::Contract {
            graph,
            out,
            reduction,
            witness_limit,
        } => {
            let g = RoadGraph::load_csv(&graph)?;
            let trips_path = graph.join("trips.csv");
            let rows = if trips_path.exists() { read_trip_rows(&trips_path)? } else { Vec::new() };
            let index = g.node_index();
            let mut keep = vec![false; g.num_nodes()];
            for r in &rows {
                for id in [&r.origin_node, &r.dest_node] {
                    if let Some(&i) = index.get(id.as_str()) {
                        keep[i] = true;
                    }
                }
            }
            let params = ContractionParams {
                target_reduction: reduction,
                witness_settle_limit: witness_limit,
            };
            let (c, stats) = contract_graph_keeping(&g, &params, &keep);
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            c.save_csv(&out)?;
            for extra in ["trips.csv", "scenario.toml"] {
                let src = graph.join(extra);
                if src.exists() {
                    fs::copy(&src, out.join(extra))?;
                }
            }
            println!(
                "contracted {} of {} nodes, {} shortcuts; {} nodes, {} edges remain",
                stats.contracted,
                g.num_nodes(),
                stats.shortcuts,
                c.nodes.len(),
                c.edges.len()
            );
        }
        Cmd::BuildInstance {
            graph,
            trips,
            scenario,
            zeta,
            out,
        } => {
            let g = RoadGraph::load_csv(&graph)?;
            let rows = read_trip_rows(&trips.unwrap_or_else(|| graph.join("trips.csv")))?;
            let mut params = scenario_params(scenario, &file);
            if scenario.is_none() {
                let p = graph.join("scenario.toml");
                if file.scenario.is_none() && p.exists() {
                    params = toml::from_str(&fs::read_to_string(&p)?)?;
                }
            }
            if let Some(z) = zeta {
                params.stagger_pct = z;
            }
            let inst = build_instance(&g, &rows, &params)?;
            inst.save_json(&out)?;
            println!("{} trips on {} arcs -> {}", inst.num_trips(), inst.num_arcs(), out.display());
        }
        Cmd::Preprocess { instance, passes, out } => {
            let inst = open_instance(&instance)?;
            let pre = preprocess(&inst, passes.unwrap_or(file.solver.passes))?;
            let text = serde_json::to_string_pretty(&diagnostics_json(&inst, &pre))?;
            emit(&text, out.as_deref())?;
        }
        Cmd::Solve {
            instance,
            mode,
            out,
            epoch_length,
            solver,
        } => {
            let inst = open_instance(&instance)?;
            let adapter = open_adapter(&solver, &file)?;
            let mut cfg = solver_config(&solver, &file);
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let start = Instant::now();
            let report = match mode {
                Mode::Offline => {
                    let res = run_matheuristic(&inst, &cfg, adapter.as_deref())?;
                    write_iteration_log(&res.log, create(&out.join("iterations.csv"))?)?;
                    write_outputs(&inst, &res.schedule, &out)?;
                    let status = serde_json::to_value(res.status)?;
                    RunReport::new(
                        &inst,
                        "offline",
                        &res.schedule,
                        res.uncontrolled,
                        res.lower_bound,
                        status.as_str().unwrap_or("unknown"),
                        start.elapsed().as_secs_f64(),
                    )
                }
                Mode::Online => {
                    let delta = epoch_length.unwrap_or(file.online.epoch_length);
                    cfg.time_limit = solver
                        .time_limit
                        .or(file.online.epoch_time_limit)
                        .unwrap_or(if delta.is_finite() { delta } else { cfg.time_limit });
                    let on = OnlineConfig {
                        epoch_length: delta,
                        inner: cfg,
                    };
                    let res = run_online(&inst, &on, adapter.as_deref())?;
                    write_epoch_log(&res.epochs, create(&out.join("epochs.csv"))?)?;
                    write_outputs(&inst, &res.schedule, &out)?;
                    let unc = construct_schedule(&inst, &StaggerVector::zeros(inst.num_trips()))?.total_delay;
                    let lb = preprocess(&inst, on.inner.passes)?.windows.initial_lb.min(res.total_delay);
                    RunReport::new(
                        &inst,
                        "online",
                        &res.schedule,
                        unc,
                        lb,
                        if res.feasible { "feasible" } else { "infeasible" },
                        start.elapsed().as_secs_f64(),
                    )
                }
            };
            fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            println!(
                "{} UB {:.3} s, LB {:.3} s, uncontrolled {:.3} s -> {}",
                report.mode,
                report.upper_bound,
                report.lower_bound,
                report.uncontrolled,
                out.display()
            );
        }
        Cmd::SweepZeta {
            instance,
            zetas,
            out,
            solver,
        } => {
            let inst = open_instance(&instance)?;
            for &z in &zetas {
                with_zeta(&inst, z)?;
            }
            let adapter = open_adapter(&solver, &file)?;
            let cfg = solver_config(&solver, &file);
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
            let rows = pool.install(|| {
                zetas
                    .par_iter()
                    .enumerate()
                    .map(|(i, &z)| {
                        let mut c = cfg.clone();
                        // separate scratch space per parallel run
                        c.workdir = c.workdir.map(|w| w.join(format!("zeta{i}")));
                        sweep_point(&inst, z, &c, adapter.as_deref())
                    })
                    .collect::<stagger::Result<Vec<_>>>()
            })?;
            write_sweep_csv(&rows, create(&out)?)?;
            info!("sweep of {} budgets written to {}", rows.len(), out.display());
        }
        Cmd::Stats { instance, passes } => {
            let inst = open_instance(&instance)?;
            let pre = preprocess(&inst, passes.unwrap_or(file.solver.passes))?;
            println!("{}", serde_json::to_string_pretty(&instance_stats(&inst, &pre)?)?);
        }
        Cmd::Evaluate {
            instance,
            shifts,
            schedule,
        } => {
            let inst = open_instance(&instance)?;
            let v = read_shifts(&inst, &shifts)?;
            let sched = construct_schedule(&inst, &v)?;
            let report = validate_schedule(&inst, &sched);
            if let Some(p) = schedule {
                sched.write_csv(&inst, create(&p)?)?;
            }
            let unc = construct_schedule(&inst, &StaggerVector::zeros(inst.num_trips()))?.total_delay;
            let run = RunReport::new(
                &inst,
                "evaluate",
                &sched,
                unc,
                0.0,
                if report.is_feasible() { "feasible" } else { "infeasible" },
                0.0,
            );
            println!("{}", serde_json::to_string_pretty(&run)?);
            if !report.is_feasible() {
                bail!("{} violation(s), first: {:?}", report.violations.len(), report.violations[0]);
            }
        }
    }
    Ok(())
}

fn scenario_params(preset: Option<Scenario>, file: &FileConfig) -> ScenarioParams {
    match preset {
        Some(Scenario::Lc) => ScenarioParams::low_congestion(),
        Some(Scenario::Hc) => ScenarioParams::high_congestion(),
        None => file.scenario.clone().unwrap_or_default(),
    }
}

fn solver_config(flags: &SolverFlags, file: &FileConfig) -> stagger::MatheuristicConfig {
    let mut cfg = file.solver.matheuristic();
    cfg.time_limit = flags.time_limit.unwrap_or(cfg.time_limit);
    cfg.milp_slice = flags.milp_slice.unwrap_or(cfg.milp_slice);
    cfg.passes = flags.passes.unwrap_or(cfg.passes);
    if flags.no_milp {
        cfg.use_milp = false;
    }
    cfg
}

fn open_adapter(flags: &SolverFlags, file: &FileConfig) -> Result<Option<Box<dyn SolverAdapter>>> {
    let path = flags.adapter.clone().or_else(|| file.solver.adapter.clone());
    match path {
        Some(p) => {
            let a = CommandAdapter::from_file(&p).with_context(|| format!("loading adapter {}", p.display()))?;
            Ok(Some(Box::new(a)))
        }
        None => Ok(None),
    }
}

fn open_instance(path: &Path) -> Result<Instance> {
    let format = if path.is_dir() {
        InstanceFormat::CsvBundle
    } else {
        InstanceFormat::Json
    };
    load_instance(path, format).with_context(|| format!("loading instance {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_trips(rows: &[stagger::TripRow], path: &Path) -> Result<()> {
    write_trip_rows(rows, create(path)?)?;
    Ok(())
}

fn write_outputs(inst: &Instance, sched: &stagger::Schedule, out: &Path) -> Result<()> {
    sched.write_csv(inst, create(&out.join("schedule.csv"))?)?;
    let mut w = csv::Writer::from_writer(create(&out.join("shifts.csv"))?);
    for (r, &s) in sched.start_shift.iter().enumerate() {
        w.serialize(ShiftRow {
            trip_id: inst.trip_id(r).to_string(),
            shift_s: s,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn read_shifts(inst: &Instance, path: &Path) -> Result<StaggerVector> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut shifts = vec![0.0; inst.num_trips()];
    let index: std::collections::HashMap<&str, usize> =
        (0..inst.num_trips()).map(|r| (inst.trip_id(r), r)).collect();
    for row in rdr.deserialize() {
        let row: ShiftRow = row?;
        let Some(&r) = index.get(row.trip_id.as_str()) else {
            bail!("unknown trip {} in {}", row.trip_id, path.display());
        };
        shifts[r] = row.shift_s;
    }
    Ok(StaggerVector::from_vec_unchecked(shifts))
}
