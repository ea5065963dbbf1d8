//! Random instances and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagger::engine::meets_time_windows;
use stagger::milp::CommandAdapter;
use stagger::network::{Edge, Node, RoadGraph};
use stagger::{construct_schedule, Arc, ArcKind, Instance, Piece, StaggerVector, TravelTimeFunction, Trip};

pub const EPS: f64 = 0.01;
/// Dyadic steps keep every sum of generated times exact in binary floating
/// point, so equal-time ties survive arc merging. Slopes on 1/32 with
/// half-integer thresholds put all times on a 1/64 grid, coarser than `EPS`.
pub const GRID: f64 = 0.125;
pub const FINE: f64 = 1.0 / 64.0;
pub const SLOPE: f64 = 1.0 / 32.0;

#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub max_trips: usize,
    pub max_arcs: usize,
    /// Budgets are drawn from `[0, max_budget]` in steps of `budget_step`,
    /// which should be dyadic.
    pub max_budget: f64,
    pub budget_step: f64,
    pub release_span: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_trips: 8,
            max_arcs: 8,
            max_budget: 6.0,
            budget_step: 0.125,
            release_span: 20.0,
        }
    }
}

fn round(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// A chain `n0 -> n1 -> ...` of arcs; every route is a contiguous stretch of
/// it, so overlaps are frequent. Deadlines leave the uncontrolled schedule
/// feasible with a random margin.
pub fn random_instance(seed: u64, p: &GenParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=p.max_arcs);
    let n = rng.gen_range(1..=p.max_trips);
    let arcs: Vec<(String, Arc)> = (0..m)
        .map(|i| {
            let nominal = round(rng.gen_range(2.0..12.0), GRID);
            let s1 = round(rng.gen_range(0.2..2.0), SLOPE);
            let t1 = [0.5, 1.0, 1.5, 2.0][rng.gen_range(0..4)];
            let mut pieces = vec![Piece {
                slope: s1,
                threshold: t1,
            }];
            if rng.gen_bool(0.3) {
                pieces.push(Piece {
                    slope: s1 + round(rng.gen_range(0.5..2.0), SLOPE),
                    threshold: t1 + [1.0, 2.0][rng.gen_range(0..2)],
                });
            }
            let ttf = TravelTimeFunction::new(nominal, pieces).unwrap();
            (
                format!("a{i}"),
                Arc {
                    tail: i,
                    head: i + 1,
                    ttf,
                    kind: ArcKind::Original,
                },
            )
        })
        .collect();
    let steps = (p.max_budget / p.budget_step).round() as u32;
    let trips: Vec<(String, Trip)> = (0..n)
        .map(|k| {
            let s = rng.gen_range(0..m);
            let e = rng.gen_range(s..m);
            let budget = if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0..=steps) as f64 * p.budget_step
            };
            (
                format!("t{k}"),
                Trip {
                    route: (s..=e).collect(),
                    release: round(rng.gen_range(0.0..=p.release_span), GRID),
                    deadline: 1e6,
                    max_stagger: budget,
                },
            )
        })
        .collect();
    let nodes = (0..=m).map(|i| format!("n{i}")).collect();
    let inst = Instance::new(nodes, arcs, trips, EPS).unwrap();
    let unc = construct_schedule(&inst, &StaggerVector::zeros(n)).unwrap();
    let deadlines: Vec<f64> = (0..n)
        .map(|r| {
            let slack = if rng.gen_bool(0.3) { 0.0 } else { round(rng.gen_range(0.0..15.0), GRID) };
            unc.arrival(&inst, r) + slack
        })
        .collect();
    inst.with_deadlines(&deadlines).unwrap()
}

pub fn corpus(count: usize, p: &GenParams) -> Vec<Instance> {
    (0..count as u64).map(|s| random_instance(1000 + s, p)).collect()
}

pub fn random_shifts(inst: &Instance, rng: &mut impl Rng) -> StaggerVector {
    StaggerVector::from_vec_unchecked(
        inst.trips()
            .iter()
            .map(|t| {
                if t.max_stagger > 0.0 && rng.gen_bool(0.8) {
                    (rng.gen_range(0.0..=t.max_stagger) / FINE).floor() * FINE
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Entries, flows and delays per trip and position.
pub struct OracleSchedule {
    pub entry: Vec<Vec<f64>>,
    pub flow: Vec<Vec<u32>>,
    pub delay: Vec<Vec<f64>>,
}

/// Straightforward time-stepping evaluation: repeatedly take every pending
/// arc entry at the earliest pending time and count, pair by pair, the
/// trips already on that arc at that instant (entered no later, not yet out).
pub fn oracle_schedule(inst: &Instance, shifts: &[f64]) -> OracleSchedule {
    let n = inst.num_trips();
    let mut entry: Vec<Vec<f64>> = inst.trips().iter().map(|t| vec![f64::NAN; t.route.len()]).collect();
    let mut flow: Vec<Vec<u32>> = inst.trips().iter().map(|t| vec![0; t.route.len()]).collect();
    let mut delay: Vec<Vec<f64>> = inst.trips().iter().map(|t| vec![0.0; t.route.len()]).collect();
    let mut exit: Vec<Vec<f64>> = entry.clone();
    let mut cur = vec![0usize; n];
    let mut next: Vec<f64> = (0..n).map(|r| inst.trip(r).release + shifts[r]).collect();
    loop {
        let pending: Vec<usize> = (0..n).filter(|&r| cur[r] < inst.trip(r).route.len()).collect();
        let Some(now) = pending.iter().map(|&r| next[r]).min_by(f64::total_cmp) else {
            break;
        };
        let batch: Vec<usize> = pending.into_iter().filter(|&r| next[r] == now).collect();
        for &r in &batch {
            entry[r][cur[r]] = now;
        }
        let mut results = Vec::new();
        for &r in &batch {
            let a = inst.trip(r).route[cur[r]];
            let mut f = 0u32;
            for o in 0..n {
                if o == r {
                    continue;
                }
                let Some(po) = inst.trip(o).route.iter().position(|&b| b == a) else {
                    continue;
                };
                let xo = entry[o][po];
                if xo.is_nan() || xo > now {
                    continue;
                }
                // a simultaneous entrant is still on the arc
                let on_arc = if batch.contains(&o) && cur[o] == po { true } else { now < exit[o][po] };
                if on_arc {
                    f += 1;
                }
            }
            let ttf = &inst.arc(a).ttf;
            let d = ttf.delay(f as f64);
            results.push((r, f, d, now + ttf.nominal + d));
        }
        for (r, f, d, out) in results {
            let p = cur[r];
            flow[r][p] = f;
            delay[r][p] = d;
            exit[r][p] = out;
            cur[r] += 1;
            next[r] = out;
        }
    }
    OracleSchedule { entry, flow, delay }
}

/// Minimum total delay over all shift vectors on a `step` grid that meet
/// the deadlines, with one minimizer.
pub fn grid_optimum(inst: &Instance, step: f64) -> (f64, Vec<f64>) {
    let counts: Vec<usize> = inst
        .trips()
        .iter()
        .map(|t| (t.max_stagger / step + 1e-9).floor() as usize + 1)
        .collect();
    let mut idx = vec![0usize; counts.len()];
    let mut best = (f64::INFINITY, Vec::new());
    loop {
        let shifts: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
        let s = construct_schedule(inst, &StaggerVector::from_vec_unchecked(shifts.clone())).unwrap();
        if meets_time_windows(inst, &s) && s.total_delay < best.0 {
            best = (s.total_delay, shifts);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn grid_size(inst: &Instance, step: f64) -> f64 {
    inst.trips()
        .iter()
        .map(|t| (t.max_stagger / step + 1e-9).floor() + 1.0)
        .product()
}

/// All-pairs shortest distances by Floyd-Warshall.
pub fn all_pairs(g: &RoadGraph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &g.edges {
        if e.length < d[e.tail][e.head] {
            d[e.tail][e.head] = e.length;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k].is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

pub fn random_digraph(seed: u64, max_nodes: usize) -> RoadGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let m = rng.gen_range(n..=4 * n);
    let nodes = (0..n)
        .map(|i| Node {
            id: format!("v{i}"),
            lat: 0.0,
            lon: 0.0,
        })
        .collect();
    let edges = (0..m)
        .map(|i| Edge {
            id: format!("e{i}"),
            tail: rng.gen_range(0..n),
            head: rng.gen_range(0..n),
            length: rng.gen_range(1..=20) as f64,
        })
        .collect();
    RoadGraph::new(nodes, edges).unwrap()
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The bundled solver adapter, when its Python bindings are importable.
pub fn highs_adapter() -> Option<CommandAdapter> {
    let ok = Command::new("python3")
        .args(["-c", "import highspy"])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false);
    if !ok {
        return None;
    }
    CommandAdapter::from_file(&workspace_root().join("configs/highs.toml")).ok()
}

/// Trips `(release, budget)` over one arc `a` with a loose deadline.
pub fn one_arc(ttf: TravelTimeFunction, trips: &[(f64, f64)]) -> Instance {
    let arcs = vec![(
        "a".to_string(),
        Arc {
            tail: 0,
            head: 1,
            ttf,
            kind: ArcKind::Original,
        },
    )];
    let trips = trips
        .iter()
        .enumerate()
        .map(|(k, &(release, budget))| {
            (
                format!("t{k}"),
                Trip {
                    route: vec![0],
                    release,
                    deadline: 1000.0,
                    max_stagger: budget,
                },
            )
        })
        .collect();
    Instance::new(vec!["u".into(), "v".into()], arcs, trips, EPS).unwrap()
}

/// Feasible schedules of `inst` under random shift vectors, the uncontrolled
/// one first.
pub fn feasible_samples(inst: &Instance, seed: u64, count: usize) -> Vec<stagger::Schedule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![construct_schedule(inst, &StaggerVector::zeros(inst.num_trips())).unwrap()];
    for _ in 0..count {
        let s = construct_schedule(inst, &random_shifts(inst, &mut rng)).unwrap();
        if meets_time_windows(inst, &s) {
            out.push(s);
        }
    }
    out
}
