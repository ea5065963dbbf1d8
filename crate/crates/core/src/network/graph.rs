use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::TripRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    /// Meters.
    pub length: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    id: String,
    tail: String,
    head: String,
    length_m: f64,
}

/// Directed road network prior to instance construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoadGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl RoadGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.tail >= nodes.len() || e.head >= nodes.len() {
                return Err(Error::Validation(format!("edge {}: unknown endpoint", e.id)));
            }
            if !(e.length > 0.0) || !e.length.is_finite() {
                return Err(Error::Validation(format!(
                    "edge {}: length must be positive, got {}",
                    e.id, e.length
                )));
            }
        }
        Ok(RoadGraph { nodes, edges })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    /// Outgoing edge indices per node.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.tail].push(i);
        }
        out
    }

    /// Reads `nodes.csv (id,lat,lon)` and `edges.csv (id,tail,head,length_m)`
    /// from a directory.
    pub fn load_csv(dir: &Path) -> Result<Self> {
        let nodes_path = dir.join("nodes.csv");
        let mut rdr = csv::Reader::from_path(&nodes_path)
            .map_err(|e| Error::Parse(format!("{}: {e}", nodes_path.display())))?;
        let nodes = rdr
            .deserialize::<Node>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let index: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let edges_path = dir.join("edges.csv");
        let mut rdr = csv::Reader::from_path(&edges_path)
            .map_err(|e| Error::Parse(format!("{}: {e}", edges_path.display())))?;
        let mut edges = Vec::new();
        for row in rdr.deserialize::<EdgeRow>() {
            let row = row?;
            let lookup = |n: &str| {
                index
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("edge {}: unknown node {n}", row.id)))
            };
            edges.push(Edge {
                tail: lookup(&row.tail)?,
                head: lookup(&row.head)?,
                id: row.id,
                length: row.length_m,
            });
        }
        RoadGraph::new(nodes, edges)
    }

    pub fn save_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("nodes.csv"))?;
        for n in &self.nodes {
            w.serialize(n)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("nodes.csv"), e))?;
        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        for e in &self.edges {
            w.serialize(EdgeRow {
                id: e.id.clone(),
                tail: self.nodes[e.tail].id.clone(),
                head: self.nodes[e.head].id.clone(),
                length_m: e.length,
            })?;
        }
        w.flush().map_err(|e| Error::io(dir.join("edges.csv"), e))?;
        Ok(())
    }

    /// Single-source distances (meters); unreachable nodes are infinite.
    pub fn distances_from(&self, src: usize) -> Vec<f64> {
        self.search(src, &self.out_edges()).0.into_iter().map(|k| k.0).collect()
    }

    /// Shortest route from `src` to `dst` as edge indices. Among routes of
    /// equal length the one with fewest arcs wins, then the one whose
    /// predecessor node indices are smallest.
    pub fn shortest_route(&self, src: usize, dst: usize, out: &[Vec<usize>]) -> Option<Vec<usize>> {
        self.route_tree(src, out).route(self, dst)
    }

    /// Shortest-route tree rooted at `src`, reusable for many destinations.
    pub fn route_tree(&self, src: usize, out: &[Vec<usize>]) -> RouteTree {
        let (dist, pred) = self.search(src, out);
        RouteTree { src, dist, pred }
    }

    fn search(&self, src: usize, out: &[Vec<usize>]) -> (Vec<(f64, u32)>, Vec<Option<usize>>) {
        let n = self.nodes.len();
        let mut dist = vec![(f64::INFINITY, u32::MAX); n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[src] = (0.0, 0);
        heap.push(Reverse(Key(0.0, 0, src)));
        while let Some(Reverse(Key(d, h, v))) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            for &ei in &out[v] {
                let e = &self.edges[ei];
                let cand = (d + e.length, h + 1);
                let cur = dist[e.head];
                let better = match cand.0.total_cmp(&cur.0).then(cand.1.cmp(&cur.1)) {
                    Ordering::Less => true,
                    Ordering::Equal => match pred[e.head] {
                        Some(p) => {
                            let pt = self.edges[p].tail;
                            v < pt || (v == pt && ei < p)
                        }
                        None => e.head != src,
                    },
                    Ordering::Greater => false,
                };
                if better && !done[e.head] {
                    let improved = cand.0 < cur.0 || cand.1 < cur.1;
                    dist[e.head] = cand;
                    pred[e.head] = Some(ei);
                    if improved {
                        heap.push(Reverse(Key(cand.0, cand.1, e.head)));
                    }
                }
            }
        }
        (dist, pred)
    }
}

#[derive(Debug, Clone)]
pub struct RouteTree {
    src: usize,
    dist: Vec<(f64, u32)>,
    pred: Vec<Option<usize>>,
}

impl RouteTree {
    pub fn route(&self, g: &RoadGraph, dst: usize) -> Option<Vec<usize>> {
        if !self.dist[dst].0.is_finite() {
            return None;
        }
        let mut route = Vec::new();
        let mut v = dst;
        while v != self.src {
            let e = self.pred[v]?;
            route.push(e);
            v = g.edges[e].tail;
        }
        route.reverse();
        Some(route)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, u32, usize);

impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

pub fn read_trip_rows(path: &Path) -> Result<Vec<TripRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(rdr
        .deserialize::<TripRow>()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn write_trip_rows<W: std::io::Write>(rows: &[TripRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<trips csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize, f64)]) -> RoadGraph {
        let nodes = (0..n)
            .map(|i| Node {
                id: format!("n{i}"),
                lat: 0.0,
                lon: i as f64,
            })
            .collect();
        let edges = edges
            .iter()
            .enumerate()
            .map(|(i, &(t, h, l))| Edge {
                id: format!("e{i}"),
                tail: t,
                head: h,
                length: l,
            })
            .collect();
        RoadGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn prefers_fewest_arcs_on_length_tie() {
        // 0->1->2->3 (1+1+2) vs 0->3 direct (4)
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 2.0), (0, 3, 4.0)]);
        let r = g.shortest_route(0, 3, &g.out_edges()).unwrap();
        assert_eq!(r, vec![3]);
    }

    #[test]
    fn tie_on_length_and_hops_uses_smaller_predecessor() {
        // 0->2->3 and 0->1->3, both length 2 and 2 hops
        let g = graph(4, &[(0, 2, 1.0), (2, 3, 1.0), (0, 1, 1.0), (1, 3, 1.0)]);
        let r = g.shortest_route(0, 3, &g.out_edges()).unwrap();
        assert_eq!(r, vec![2, 3]);
    }

    #[test]
    fn unreachable_is_none() {
        let g = graph(3, &[(0, 1, 1.0)]);
        assert!(g.shortest_route(0, 2, &g.out_edges()).is_none());
        assert!(g.distances_from(0)[2].is_infinite());
    }

    #[test]
    fn csv_round_trip() {
        let g = graph(3, &[(0, 1, 1.5), (1, 2, 2.0)]);
        let dir = tempfile::tempdir().unwrap();
        g.save_csv(dir.path()).unwrap();
        assert_eq!(RoadGraph::load_csv(dir.path()).unwrap(), g);
    }
}
