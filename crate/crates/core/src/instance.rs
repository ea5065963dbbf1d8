//! Domain types shared by every solver stage: travel-time functions, arcs,
//! trips and the validated [`Instance`], together with its JSON and CSV
//! interchange formats.
//!
//! All times are `f64` seconds. Arcs, nodes and trips are addressed by dense
//! indices assigned at construction; the external string identifiers are
//! kept in side tables so files round-trip unchanged.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comparison tolerance for time quantities.
pub const TIME_TOL: f64 = 1e-9;

/// Default strictness constant of the MILP model.
pub const DEFAULT_EPSILON: f64 = 0.01;

pub type NodeIndex = usize;
pub type ArcIndex = usize;
pub type TripIndex = usize;

/// One non-flat piece of a travel-time function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    /// Seconds of delay per vehicle above the threshold.
    pub slope: f64,
    /// Vehicle count at which the piece starts.
    pub threshold: f64,
}

/// Piecewise-linear convex travel time `nominal + max_k max(0, slope_k (f - threshold_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeFunction {
    pub nominal: f64,
    pub pieces: Vec<Piece>,
}

impl TravelTimeFunction {
    pub fn new(nominal: f64, pieces: Vec<Piece>) -> Result<Self> {
        let ttf = TravelTimeFunction { nominal, pieces };
        ttf.check()?;
        Ok(ttf)
    }

    /// Single-piece function, the common calibration.
    pub fn single(nominal: f64, slope: f64, threshold: f64) -> Result<Self> {
        Self::new(nominal, vec![Piece { slope, threshold }])
    }

    /// A function that never produces delay (used for merged arcs).
    pub fn free_flow(nominal: f64) -> Self {
        TravelTimeFunction {
            nominal,
            pieces: Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.nominal > 0.0) || !self.nominal.is_finite() {
            return Err(Error::Validation(format!(
                "nominal travel time must be positive, got {}",
                self.nominal
            )));
        }
        for p in &self.pieces {
            if !(p.slope > 0.0 && p.threshold > 0.0) {
                return Err(Error::Validation(format!(
                    "piece slope and threshold must be positive, got {p:?}"
                )));
            }
        }
        for w in self.pieces.windows(2) {
            if !(w[1].threshold > w[0].threshold && w[1].slope > w[0].slope) {
                return Err(Error::Validation(
                    "pieces must have strictly increasing thresholds and slopes".into(),
                ));
            }
        }
        Ok(())
    }

    /// Congestion delay at the given flow.
    #[inline]
    pub fn delay(&self, flow: f64) -> f64 {
        let mut d = 0.0f64;
        for p in &self.pieces {
            let v = p.slope * (flow - p.threshold);
            if v > d {
                d = v;
            }
        }
        d
    }

    #[inline]
    pub fn travel_time(&self, flow: f64) -> f64 {
        self.nominal + self.delay(flow)
    }

    /// First threshold, or infinity when the function is flat.
    pub fn first_threshold(&self) -> f64 {
        self.pieces.first().map_or(f64::INFINITY, |p| p.threshold)
    }
}

/// Free function form of [`TravelTimeFunction::travel_time`].
pub fn travel_time(ttf: &TravelTimeFunction, flow: f64) -> f64 {
    ttf.travel_time(flow)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArcKind {
    Original,
    /// Parallel copy of `parent` carrying one conflicting set.
    Conflicting { parent: ArcIndex },
    /// Concatenation of conflict-free arcs of the source instance.
    Merged { parts: Vec<ArcIndex> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub tail: NodeIndex,
    pub head: NodeIndex,
    pub ttf: TravelTimeFunction,
    pub kind: ArcKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub route: Vec<ArcIndex>,
    pub release: f64,
    pub deadline: f64,
    pub max_stagger: f64,
}

/// Immutable, validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    node_ids: Vec<String>,
    arc_ids: Vec<String>,
    trip_ids: Vec<String>,
    arcs: Vec<Arc>,
    trips: Vec<Trip>,
    trips_on_arc: Vec<Vec<TripIndex>>,
    /// For each trip, position of each arc in its route (arc -> pos).
    positions: Vec<HashMap<ArcIndex, usize>>,
    epsilon: f64,
}

impl Instance {
    /// Builds and validates an instance from node identifiers, identified
    /// arcs and identified trips.
    pub fn new(
        node_ids: Vec<String>,
        arcs: Vec<(String, Arc)>,
        trips: Vec<(String, Trip)>,
        epsilon: f64,
    ) -> Result<Self> {
        let (arc_ids, arcs): (Vec<_>, Vec<_>) = arcs.into_iter().unzip();
        let (trip_ids, trips): (Vec<_>, Vec<_>) = trips.into_iter().unzip();
        let mut node_ids = node_ids;
        let max_node = arcs
            .iter()
            .map(|a| a.tail.max(a.head) + 1)
            .max()
            .unwrap_or(0);
        if node_ids.len() < max_node {
            return Err(Error::Validation(format!(
                "arcs reference node index {} but only {} nodes declared",
                max_node - 1,
                node_ids.len()
            )));
        }
        node_ids.shrink_to_fit();

        for (id, arc) in arc_ids.iter().zip(&arcs) {
            arc.ttf
                .check()
                .map_err(|e| Error::Validation(format!("arc {id}: {e}")))?;
        }
        if !(epsilon > 0.0) {
            return Err(Error::Validation(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if let Some(min_nom) = arcs
            .iter()
            .map(|a| a.ttf.nominal)
            .min_by(|a, b| a.total_cmp(b))
        {
            if epsilon >= min_nom {
                return Err(Error::Validation(format!(
                    "epsilon {epsilon} must be smaller than the smallest nominal travel time {min_nom}"
                )));
            }
        }

        let mut trips_on_arc = vec![Vec::new(); arcs.len()];
        let mut positions = Vec::with_capacity(trips.len());
        for (r, (id, trip)) in trip_ids.iter().zip(&trips).enumerate() {
            if trip.route.is_empty() {
                return Err(Error::Validation(format!("trip {id}: empty route")));
            }
            let mut pos = HashMap::with_capacity(trip.route.len());
            for (i, &a) in trip.route.iter().enumerate() {
                if a >= arcs.len() {
                    return Err(Error::Validation(format!(
                        "trip {id}: unknown arc index {a}"
                    )));
                }
                if pos.insert(a, i).is_some() {
                    return Err(Error::Validation(format!(
                        "trip {id}: arc {} visited twice",
                        arc_ids[a]
                    )));
                }
                trips_on_arc[a].push(r);
            }
            for w in trip.route.windows(2) {
                if arcs[w[0]].head != arcs[w[1]].tail {
                    return Err(Error::Validation(format!(
                        "trip {id}: route gap between arc {} and arc {}",
                        arc_ids[w[0]], arc_ids[w[1]]
                    )));
                }
            }
            if !trip.release.is_finite() || !trip.deadline.is_finite() {
                return Err(Error::Validation(format!(
                    "trip {id}: release and deadline must be finite"
                )));
            }
            if !(trip.max_stagger >= 0.0) {
                return Err(Error::Validation(format!(
                    "trip {id}: negative staggering budget {}",
                    trip.max_stagger
                )));
            }
            let free_flow: f64 = trip.route.iter().map(|&a| arcs[a].ttf.nominal).sum();
            if trip.release + free_flow > trip.deadline + TIME_TOL {
                return Err(Error::Validation(format!(
                    "trip {id}: deadline {} earlier than free-flow arrival {}",
                    trip.deadline,
                    trip.release + free_flow
                )));
            }
            positions.push(pos);
        }

        Ok(Instance {
            node_ids,
            arc_ids,
            trip_ids,
            arcs,
            trips,
            trips_on_arc,
            positions,
            epsilon,
        })
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: ArcIndex) -> &Arc {
        &self.arcs[a]
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn trip(&self, r: TripIndex) -> &Trip {
        &self.trips[r]
    }

    pub fn num_trips(&self) -> usize {
        self.trips.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn trips_on_arc(&self, a: ArcIndex) -> &[TripIndex] {
        &self.trips_on_arc[a]
    }

    /// Position of arc `a` on the route of trip `r`, if it is used.
    pub fn position(&self, r: TripIndex, a: ArcIndex) -> Option<usize> {
        self.positions[r].get(&a).copied()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn node_id(&self, n: NodeIndex) -> &str {
        &self.node_ids[n]
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn arc_id(&self, a: ArcIndex) -> &str {
        &self.arc_ids[a]
    }

    pub fn trip_id(&self, r: TripIndex) -> &str {
        &self.trip_ids[r]
    }

    /// Free-flow travel time of a trip's whole route.
    pub fn route_nominal(&self, r: TripIndex) -> f64 {
        self.trips[r]
            .route
            .iter()
            .map(|&a| self.arcs[a].ttf.nominal)
            .sum()
    }

    /// Copy of this instance with every trip budget replaced.
    pub fn with_budgets(&self, budgets: impl Fn(TripIndex, &Trip) -> f64) -> Result<Self> {
        let trips = self
            .trips
            .iter()
            .enumerate()
            .map(|(r, t)| {
                (
                    self.trip_ids[r].clone(),
                    Trip {
                        max_stagger: budgets(r, t),
                        ..t.clone()
                    },
                )
            })
            .collect();
        self.rebuild(trips)
    }

    /// Copy with new deadlines.
    pub fn with_deadlines(&self, deadlines: &[f64]) -> Result<Self> {
        let trips = self
            .trips
            .iter()
            .enumerate()
            .map(|(r, t)| {
                (
                    self.trip_ids[r].clone(),
                    Trip {
                        deadline: deadlines[r],
                        ..t.clone()
                    },
                )
            })
            .collect();
        self.rebuild(trips)
    }

    /// Same arcs and nodes, different trip set.
    pub fn with_trips(&self, trips: Vec<(String, Trip)>) -> Result<Self> {
        self.rebuild(trips)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        self.rebuild_with(self.trip_entries(), epsilon)
    }

    fn trip_entries(&self) -> Vec<(String, Trip)> {
        self.trip_ids
            .iter()
            .cloned()
            .zip(self.trips.iter().cloned())
            .collect()
    }

    fn rebuild(&self, trips: Vec<(String, Trip)>) -> Result<Self> {
        self.rebuild_with(trips, self.epsilon)
    }

    fn rebuild_with(&self, trips: Vec<(String, Trip)>, epsilon: f64) -> Result<Self> {
        Instance::new(
            self.node_ids.clone(),
            self.arc_ids
                .iter()
                .cloned()
                .zip(self.arcs.iter().cloned())
                .collect(),
            trips,
            epsilon,
        )
    }
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

/// External identifier: JSON strings and integers are both accepted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
enum ExtId {
    Str(String),
    Int(i64),
}

impl ExtId {
    fn into_string(self) -> String {
        match self {
            ExtId::Str(s) => s,
            ExtId::Int(i) => i.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArcRecord {
    id: ExtId,
    tail: ExtId,
    head: ExtId,
    nominal: f64,
    #[serde(default)]
    pieces: Vec<Piece>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TripRecord {
    id: ExtId,
    route: Vec<ExtId>,
    release: f64,
    deadline: f64,
    max_stagger: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    nodes: Vec<ExtId>,
    arcs: Vec<ArcRecord>,
    trips: Vec<TripRecord>,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Instance {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let rec: InstanceRecord = serde_json::from_str(s)?;
        let node_ids: Vec<String> = rec.nodes.into_iter().map(ExtId::into_string).collect();
        let node_index: HashMap<&str, usize> = node_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if node_index.len() != node_ids.len() {
            return Err(Error::Validation("duplicate node identifiers".into()));
        }
        let mut arcs = Vec::with_capacity(rec.arcs.len());
        for a in rec.arcs {
            let id = a.id.into_string();
            let lookup = |n: ExtId| {
                let n = n.into_string();
                node_index
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("arc {id}: unknown node {n}")))
            };
            let tail = lookup(a.tail)?;
            let head = lookup(a.head)?;
            arcs.push((
                id,
                Arc {
                    tail,
                    head,
                    ttf: TravelTimeFunction {
                        nominal: a.nominal,
                        pieces: a.pieces,
                    },
                    kind: ArcKind::Original,
                },
            ));
        }
        let arc_index: HashMap<String, usize> = arcs
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (id.clone(), i))
            .collect();
        if arc_index.len() != arcs.len() {
            return Err(Error::Validation("duplicate arc identifiers".into()));
        }
        let mut trips = Vec::with_capacity(rec.trips.len());
        for t in rec.trips {
            let id = t.id.into_string();
            let route = t
                .route
                .into_iter()
                .map(|a| {
                    let a = a.into_string();
                    arc_index
                        .get(&a)
                        .copied()
                        .ok_or_else(|| Error::Validation(format!("trip {id}: unknown arc {a}")))
                })
                .collect::<Result<Vec<_>>>()?;
            trips.push((
                id,
                Trip {
                    route,
                    release: t.release,
                    deadline: t.deadline,
                    max_stagger: t.max_stagger,
                },
            ));
        }
        Instance::new(node_ids, arcs, trips, rec.epsilon)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let rec = InstanceRecord {
            nodes: self.node_ids.iter().cloned().map(ExtId::Str).collect(),
            arcs: self
                .arcs
                .iter()
                .enumerate()
                .map(|(i, a)| ArcRecord {
                    id: ExtId::Str(self.arc_ids[i].clone()),
                    tail: ExtId::Str(self.node_ids[a.tail].clone()),
                    head: ExtId::Str(self.node_ids[a.head].clone()),
                    nominal: a.ttf.nominal,
                    pieces: a.ttf.pieces.clone(),
                })
                .collect(),
            trips: self
                .trips
                .iter()
                .enumerate()
                .map(|(i, t)| TripRecord {
                    id: ExtId::Str(self.trip_ids[i].clone()),
                    route: t
                        .route
                        .iter()
                        .map(|&a| ExtId::Str(self.arc_ids[a].clone()))
                        .collect(),
                    release: t.release,
                    deadline: t.deadline,
                    max_stagger: t.max_stagger,
                })
                .collect(),
            epsilon: self.epsilon,
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Supported on-disk instance formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFormat {
    Json,
    /// A trips CSV next to a graph directory; routes come from the network toolkit.
    CsvBundle,
}

/// Loads an instance. For [`InstanceFormat::CsvBundle`], `path` is a directory
/// holding `nodes.csv`, `edges.csv` and `trips.csv`, and optionally
/// `scenario.toml` with [`crate::network::ScenarioParams`].
pub fn load_instance(path: &Path, format: InstanceFormat) -> Result<Instance> {
    match format {
        InstanceFormat::Json => {
            let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Instance::from_json_str(&s)
        }
        InstanceFormat::CsvBundle => {
            let graph = crate::network::RoadGraph::load_csv(path)?;
            let trips = crate::network::read_trip_rows(&path.join("trips.csv"))?;
            let scenario_path = path.join("scenario.toml");
            let params = if scenario_path.exists() {
                let s = fs::read_to_string(&scenario_path).map_err(|e| Error::io(&scenario_path, e))?;
                toml::from_str(&s).map_err(|e| Error::Parse(e.to_string()))?
            } else {
                crate::network::ScenarioParams::default()
            };
            crate::network::build_instance(&graph, &trips, &params)
        }
    }
}

/// One row of the trips CSV: `trip_id,origin_node,dest_node,release_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRow {
    pub trip_id: String,
    pub origin_node: String,
    pub dest_node: String,
    pub release_s: f64,
}
