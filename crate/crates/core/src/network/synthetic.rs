//! Seeded generator for grid-plus-diagonal networks with clustered demand.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::graph::{Edge, Node, RoadGraph};
use crate::error::{Error, Result};
use crate::instance::TripRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub rows: usize,
    pub cols: usize,
    /// Block length in meters.
    pub spacing: f64,
    /// Relative length perturbation, lengths stay integer meters.
    pub length_jitter: f64,
    /// Probability that a cell gets a two-way diagonal.
    pub diagonal_prob: f64,
    pub trips: usize,
    /// Mean inter-arrival time in seconds.
    pub mean_interarrival: f64,
    pub hotspots: usize,
    /// Probability that a trip heads to a hotspot, in `[0, 1]`.
    pub hotspot_intensity: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            rows: 6,
            cols: 6,
            spacing: 200.0,
            length_jitter: 0.2,
            diagonal_prob: 0.3,
            trips: 60,
            mean_interarrival: 4.0,
            hotspots: 2,
            hotspot_intensity: 0.7,
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if self.rows * self.cols < 2 {
            return Err(Error::Validation("synthetic grid needs at least two nodes".into()));
        }
        if !(self.spacing >= 2.0) || !(0.0..1.0).contains(&self.length_jitter) {
            return Err(Error::Validation("synthetic spacing or jitter out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.diagonal_prob) || !(0.0..=1.0).contains(&self.hotspot_intensity) {
            return Err(Error::Validation("synthetic probabilities must lie in [0, 1]".into()));
        }
        if !(self.mean_interarrival > 0.0) {
            return Err(Error::Validation("mean inter-arrival must be positive".into()));
        }
        Ok(())
    }
}

/// Builds a reproducible network and trip list from `seed`.
pub fn generate_synthetic(seed: u64, p: &SyntheticParams) -> Result<(RoadGraph, Vec<TripRow>)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |r: usize, c: usize| r * p.cols + c;
    let mut nodes = Vec::with_capacity(p.rows * p.cols);
    for r in 0..p.rows {
        for c in 0..p.cols {
            nodes.push(Node {
                id: format!("n{r}_{c}"),
                // roughly 111 km per degree
                lat: r as f64 * p.spacing / 111_000.0,
                lon: c as f64 * p.spacing / 111_000.0,
            });
        }
    }

    let mut edges = Vec::new();
    let mut add_pair = |rng: &mut ChaCha8Rng, u: usize, v: usize, base: f64| {
        for (t, h) in [(u, v), (v, u)] {
            let jitter = rng.gen_range(-p.length_jitter..=p.length_jitter);
            let length = (base * (1.0 + jitter)).round().max(1.0);
            edges.push(Edge {
                id: format!("e{}", edges.len()),
                tail: t,
                head: h,
                length,
            });
        }
    };
    for r in 0..p.rows {
        for c in 0..p.cols {
            if c + 1 < p.cols {
                add_pair(&mut rng, id(r, c), id(r, c + 1), p.spacing);
            }
            if r + 1 < p.rows {
                add_pair(&mut rng, id(r, c), id(r + 1, c), p.spacing);
            }
            if r + 1 < p.rows && c + 1 < p.cols && rng.gen_bool(p.diagonal_prob) {
                add_pair(&mut rng, id(r, c), id(r + 1, c + 1), p.spacing * std::f64::consts::SQRT_2);
            }
        }
    }
    let graph = RoadGraph::new(nodes, edges)?;

    let n = graph.num_nodes();
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut rng);
    let hotspots: Vec<usize> = all.into_iter().take(p.hotspots.min(n)).collect();
    let gap = Exp::new(1.0 / p.mean_interarrival).map_err(|e| Error::Validation(e.to_string()))?;
    let mut t = 0.0;
    let mut trips = Vec::with_capacity(p.trips);
    for k in 0..p.trips {
        t += gap.sample(&mut rng);
        let dest = if !hotspots.is_empty() && rng.gen_bool(p.hotspot_intensity) {
            hotspots[rng.gen_range(0..hotspots.len())]
        } else {
            rng.gen_range(0..n)
        };
        let origin = loop {
            let o = rng.gen_range(0..n);
            if o != dest {
                break o;
            }
        };
        trips.push(TripRow {
            trip_id: format!("t{k}"),
            origin_node: graph.nodes[origin].id.clone(),
            dest_node: graph.nodes[dest].id.clone(),
            release_s: (t * 10.0).round() / 10.0,
        });
    }
    Ok((graph, trips))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_output() {
        let p = SyntheticParams::default();
        assert_eq!(generate_synthetic(42, &p).unwrap(), generate_synthetic(42, &p).unwrap());
        assert_ne!(generate_synthetic(42, &p).unwrap().1, generate_synthetic(43, &p).unwrap().1);
    }

    #[test]
    fn lengths_are_integer_and_grid_is_two_way() {
        let (g, trips) = generate_synthetic(7, &SyntheticParams::default()).unwrap();
        assert!(g.edges.iter().all(|e| e.length.fract() == 0.0 && e.length > 0.0));
        assert_eq!(g.edges.len() % 2, 0);
        assert!(trips.windows(2).all(|w| w[0].release_s <= w[1].release_s));
        assert!(trips.iter().all(|t| t.origin_node != t.dest_node));
    }
}
