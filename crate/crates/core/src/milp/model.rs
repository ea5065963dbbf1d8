use log::warn;

use super::lp::{LinearModel, Sense, VarKind};
use crate::engine::Schedule;
use crate::error::{Error, Result};
use crate::instance::{ArcIndex, ArcKind, TripIndex};
use crate::preprocessing::{ReducedInstance, TimeWindows};

/// Binaries and constants of one ordered pair on a conflicting arc.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVars {
    pub arc: ArcIndex,
    pub first: TripIndex,
    pub second: TripIndex,
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    /// `M1..M4` before any fixing.
    pub big_m: [f64; 4],
}

/// Mixed-integer model on a reduced instance. Variable indices are kept per
/// trip and route position.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub lp: LinearModel,
    pub x: Vec<Vec<usize>>,
    pub d: Vec<Vec<usize>>,
    pub f: Vec<Vec<usize>>,
    pub pairs: Vec<PairVars>,
    /// Piece-selection binaries per trip and position, zero piece first;
    /// empty unless built with [`ModelOptions::exact_delay`].
    pub selectors: Vec<Vec<Vec<usize>>>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelOptions {
    /// Pin every delay to its travel-time function value instead of only
    /// bounding it from below. Without this a solution may carry more delay
    /// than its flows imply, which the engine cannot reproduce.
    pub exact_delay: bool,
}

fn fixed(lp: &mut LinearModel, v: usize, value: f64) {
    lp.vars[v].lb = value;
    lp.vars[v].ub = value;
}

/// Builds the model. `tw` must be the windows projected onto `red`.
pub fn build_model(red: &ReducedInstance, tw: &TimeWindows) -> Result<MilpModel> {
    build_model_with(red, tw, &ModelOptions::default())
}

pub fn build_model_with(red: &ReducedInstance, tw: &TimeWindows, opts: &ModelOptions) -> Result<MilpModel> {
    let inst = &red.instance;
    let eps = inst.epsilon();
    let mut lp = LinearModel::default();
    let n = inst.num_trips();
    let (mut xs, mut ds, mut fs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));

    let first_count = {
        let mut c = vec![vec![0usize; 0]; n];
        for (r, row) in c.iter_mut().enumerate() {
            *row = vec![0; inst.trip(r).route.len()];
        }
        for (ci, &a) in red.conflicting_arcs.iter().enumerate() {
            for &(r, _) in &red.pairs[ci] {
                let p = inst.position(r, a).expect("pair member on arc");
                c[r][p] += 1;
            }
        }
        c
    };

    for r in 0..n {
        let trip = inst.trip(r);
        let (mut x, mut d, mut f) = (Vec::new(), Vec::new(), Vec::new());
        for (p, &a) in trip.route.iter().enumerate() {
            let arc = inst.arc(a);
            let merged = matches!(arc.kind, ArcKind::Merged { .. }) || arc.ttf.pieces.is_empty();
            let (lo, hi) = if p == 0 {
                (trip.release, trip.release + trip.max_stagger)
            } else {
                (tw.earliest_entry(r, p), tw.latest_entry(r, p))
            };
            x.push(lp.add_var(format!("x_a{a}_r{r}"), lo, hi.max(lo), VarKind::Continuous));
            let dmax = if merged {
                0.0
            } else {
                (tw.latest_exit(r, p) - tw.earliest_entry(r, p) - arc.ttf.nominal).max(0.0)
            };
            d.push(lp.add_var(format!("d_a{a}_r{r}"), 0.0, dmax, VarKind::Continuous));
            let fmax = if merged { 0.0 } else { first_count[r][p] as f64 };
            f.push(lp.add_var(format!("f_a{a}_r{r}"), 0.0, fmax, VarKind::Continuous));
        }
        xs.push(x);
        ds.push(d);
        fs.push(f);
    }

    for r in 0..n {
        let route = &inst.trip(r).route;
        for p in 0..route.len() {
            lp.objective.push((ds[r][p], 1.0));
        }
    }

    for r in 0..n {
        let trip = inst.trip(r);
        let last = trip.route.len() - 1;
        for (p, &a) in trip.route.iter().enumerate() {
            let ttf = &inst.arc(a).ttf;
            for (k, piece) in ttf.pieces.iter().enumerate() {
                lp.add_row(
                    format!("ep_a{a}_r{r}_k{k}"),
                    vec![(ds[r][p], 1.0), (fs[r][p], -piece.slope)],
                    Sense::Ge,
                    -piece.slope * piece.threshold,
                );
            }
            if p < last {
                lp.add_row(
                    format!("ct_a{a}_r{r}"),
                    vec![(xs[r][p + 1], 1.0), (xs[r][p], -1.0), (ds[r][p], -1.0)],
                    Sense::Eq,
                    ttf.nominal,
                );
            } else {
                lp.add_row(
                    format!("dl_r{r}"),
                    vec![(xs[r][p], 1.0), (ds[r][p], 1.0)],
                    Sense::Le,
                    trip.deadline - ttf.nominal,
                );
            }
        }
    }

    let mut selectors: Vec<Vec<Vec<usize>>> = (0..n).map(|r| vec![Vec::new(); inst.trip(r).route.len()]).collect();
    if opts.exact_delay {
        for r in 0..n {
            for (p, &a) in inst.trip(r).route.iter().enumerate() {
                let dmax = lp.vars[ds[r][p]].ub;
                if dmax <= 0.0 {
                    continue;
                }
                let ttf = &inst.arc(a).ttf;
                let zero = lp.add_var(format!("z_a{a}_r{r}_k0"), 0.0, 1.0, VarKind::Binary);
                lp.add_row(format!("du_a{a}_r{r}_k0"), vec![(ds[r][p], 1.0), (zero, dmax)], Sense::Le, dmax);
                let mut sel = vec![zero];
                for (k, piece) in ttf.pieces.iter().enumerate() {
                    let z = lp.add_var(format!("z_a{a}_r{r}_k{}", k + 1), 0.0, 1.0, VarKind::Binary);
                    // d <= slope (f - threshold) when selected; slack covers d <= dmax, f >= 0 otherwise
                    let big = dmax + piece.slope * piece.threshold;
                    lp.add_row(
                        format!("du_a{a}_r{r}_k{}", k + 1),
                        vec![(ds[r][p], 1.0), (fs[r][p], -piece.slope), (z, big)],
                        Sense::Le,
                        big - piece.slope * piece.threshold,
                    );
                    sel.push(z);
                }
                lp.add_row(
                    format!("dz_a{a}_r{r}"),
                    sel.iter().map(|&z| (z, 1.0)).collect(),
                    Sense::Eq,
                    1.0,
                );
                selectors[r][p] = sel;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut gamma_of: Vec<Vec<Vec<usize>>> = (0..n).map(|r| vec![Vec::new(); inst.trip(r).route.len()]).collect();
    for (ci, &a) in red.conflicting_arcs.iter().enumerate() {
        let nominal = inst.arc(a).ttf.nominal;
        for &(r, o) in &red.pairs[ci] {
            let pr = inst.position(r, a).expect("pair member on arc");
            let po = inst.position(o, a).expect("pair member on arc");
            let m1 = tw.latest_entry(r, pr) - tw.earliest_entry(o, po) + eps;
            let m2 = tw.latest_entry(o, po) - tw.earliest_entry(r, pr);
            let m3 = tw.latest_exit(o, po) - tw.earliest_entry(r, pr);
            let m4 = tw.latest_exit(r, pr) - tw.earliest_entry(o, po) + eps;
            let tag = format!("a{a}_r{r}_s{o}");
            let alpha = lp.add_var(format!("alpha_{tag}"), 0.0, 1.0, VarKind::Binary);
            let beta = lp.add_var(format!("beta_{tag}"), 0.0, 1.0, VarKind::Binary);
            let gamma = lp.add_var(format!("gamma_{tag}"), 0.0, 1.0, VarKind::Binary);
            let (xr, xo, do_) = (xs[r][pr], xs[o][po], ds[o][po]);

            let alpha_fix = match (m1 < 0.0, m2 < 0.0) {
                (true, true) => return Err(inconsistent(red, r, o, a)),
                (true, false) => Some(0.0),
                (false, true) => Some(1.0),
                (false, false) => {
                    lp.add_row(format!("ma_{tag}"), vec![(xr, 1.0), (xo, -1.0), (alpha, -m1)], Sense::Le, -eps);
                    lp.add_row(format!("mb_{tag}"), vec![(xo, 1.0), (xr, -1.0), (alpha, m2)], Sense::Le, m2);
                    None
                }
            };
            let beta_fix = match (m3 < 0.0, m4 < 0.0) {
                (true, true) => return Err(inconsistent(red, r, o, a)),
                (true, false) => Some(0.0),
                (false, true) => Some(1.0),
                (false, false) => {
                    lp.add_row(
                        format!("mc_{tag}"),
                        vec![(xo, 1.0), (do_, 1.0), (xr, -1.0), (beta, -m3)],
                        Sense::Le,
                        -nominal,
                    );
                    lp.add_row(
                        format!("md_{tag}"),
                        vec![(xr, 1.0), (xo, -1.0), (do_, -1.0), (beta, m4)],
                        Sense::Le,
                        m4 + nominal - eps,
                    );
                    None
                }
            };
            if let Some(v) = alpha_fix {
                fixed(&mut lp, alpha, v);
            }
            if let Some(v) = beta_fix {
                fixed(&mut lp, beta, v);
            }
            match (alpha_fix, beta_fix) {
                (Some(0.0), _) => fixed(&mut lp, gamma, 0.0),
                (_, Some(0.0)) => fixed(&mut lp, gamma, 0.0),
                (Some(_), Some(_)) => fixed(&mut lp, gamma, 1.0),
                _ => {
                    lp.add_row(format!("ga_{tag}"), vec![(gamma, 1.0), (alpha, -1.0), (beta, -1.0)], Sense::Ge, -1.0);
                    lp.add_row(format!("gb_{tag}"), vec![(gamma, 2.0), (alpha, -1.0), (beta, -1.0)], Sense::Le, 0.0);
                }
            }
            gamma_of[r][pr].push(gamma);
            pairs.push(PairVars {
                arc: a,
                first: r,
                second: o,
                alpha,
                beta,
                gamma,
                big_m: [m1, m2, m3, m4],
            });
        }
    }

    for &a in &red.conflicting_arcs {
        for &r in inst.trips_on_arc(a) {
            let p = inst.position(r, a).expect("trip on arc");
            let mut terms = vec![(fs[r][p], 1.0)];
            terms.extend(gamma_of[r][p].iter().map(|&g| (g, -1.0)));
            lp.add_row(format!("fl_a{a}_r{r}"), terms, Sense::Eq, 0.0);
        }
    }

    Ok(MilpModel {
        lp,
        x: xs,
        d: ds,
        f: fs,
        pairs,
        selectors,
        epsilon: eps,
    })
}

fn inconsistent(red: &ReducedInstance, r: TripIndex, o: TripIndex, a: ArcIndex) -> Error {
    let inst = &red.instance;
    Error::Infeasible(format!(
        "inconsistent windows for trips {} and {} on arc {}",
        inst.trip_id(r),
        inst.trip_id(o),
        inst.arc_id(a)
    ))
}

impl MilpModel {
    /// Full variable assignment encoding `sched` (a schedule of the reduced
    /// instance) through the activation conditions.
    pub fn encode(&self, red: &ReducedInstance, sched: &Schedule) -> Vec<f64> {
        let inst = &red.instance;
        let mut v: Vec<f64> = self.lp.vars.iter().map(|var| var.lb).collect();
        for r in 0..inst.num_trips() {
            for p in 0..inst.trip(r).route.len() {
                v[self.x[r][p]] = sched.entry[r][p];
                v[self.d[r][p]] = sched.delay[r][p];
                v[self.f[r][p]] = 0.0;
            }
        }
        let mut band = 0usize;
        for pv in &self.pairs {
            let pr = inst.position(pv.first, pv.arc).expect("pair on arc");
            let po = inst.position(pv.second, pv.arc).expect("pair on arc");
            let xr = sched.entry[pv.first][pr];
            let xo = sched.entry[pv.second][po];
            let exit_o = sched.exit(inst, pv.second, po);
            let alpha = if xr >= xo { 1.0 } else { 0.0 };
            let beta = if xr < exit_o { 1.0 } else { 0.0 };
            if (xr < xo && xr > xo - self.epsilon) || (xr < exit_o && xr > exit_o - self.epsilon) {
                band += 1;
            }
            let gamma = alpha * beta;
            v[pv.alpha] = alpha;
            v[pv.beta] = beta;
            v[pv.gamma] = gamma;
            v[self.f[pv.first][pr]] += gamma;
        }
        for r in 0..inst.num_trips() {
            for (p, &a) in inst.trip(r).route.iter().enumerate() {
                let sel = &self.selectors[r][p];
                if sel.is_empty() {
                    continue;
                }
                let ttf = &inst.arc(a).ttf;
                let f = v[self.f[r][p]];
                let mut best = (0usize, 0.0f64);
                for (k, piece) in ttf.pieces.iter().enumerate() {
                    let val = piece.slope * (f - piece.threshold);
                    if val > best.1 {
                        best = (k + 1, val);
                    }
                }
                for (k, &z) in sel.iter().enumerate() {
                    v[z] = if k == best.0 { 1.0 } else { 0.0 };
                }
            }
        }
        if band > 0 {
            warn!("warm start: {band} pair(s) closer than epsilon, the start may be rejected");
        }
        v
    }

    /// Departure shifts read from an assignment, clamped into the budgets.
    pub fn decode_shifts(&self, red: &ReducedInstance, values: &[f64]) -> Vec<f64> {
        let inst = &red.instance;
        (0..inst.num_trips())
            .map(|r| {
                let t = inst.trip(r);
                (values[self.x[r][0]] - t.release).clamp(0.0, t.max_stagger)
            })
            .collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.lp.num_binaries()
    }
}
