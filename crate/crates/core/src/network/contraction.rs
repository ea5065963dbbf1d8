//! Node contraction that keeps shortest-path distances between the surviving
//! nodes. Nodes are contracted in ascending edge-difference order with lazy
//! priority updates: a popped node's edge difference is recomputed and the
//! node is re-queued if it no longer beats the next candidate.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use log::debug;

use super::graph::{Edge, RoadGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionParams {
    /// Fraction of nodes to remove, in `[0, 1]`.
    pub target_reduction: f64,
    /// Settled-node budget of one witness search. When exhausted, the
    /// shortcut is added, which keeps distances exact.
    pub witness_settle_limit: usize,
}

impl Default for ContractionParams {
    fn default() -> Self {
        ContractionParams {
            target_reduction: 0.5,
            witness_settle_limit: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractionStats {
    pub contracted: usize,
    pub shortcuts: usize,
    pub lazy_requeues: usize,
}

/// Working graph: min-weight adjacency in both directions.
struct Overlay {
    out: Vec<BTreeMap<usize, f64>>,
    inc: Vec<BTreeMap<usize, f64>>,
    /// Edge id carried by each (tail, head) pair.
    ids: Vec<BTreeMap<usize, String>>,
    contracted: Vec<bool>,
}

impl Overlay {
    fn new(g: &RoadGraph) -> Self {
        let n = g.num_nodes();
        let mut o = Overlay {
            out: vec![BTreeMap::new(); n],
            inc: vec![BTreeMap::new(); n],
            ids: vec![BTreeMap::new(); n],
            contracted: vec![false; n],
        };
        for e in &g.edges {
            if e.tail == e.head {
                continue;
            }
            o.set_if_shorter(e.tail, e.head, e.length, &e.id);
        }
        o
    }

    fn set_if_shorter(&mut self, u: usize, w: usize, len: f64, id: &str) -> bool {
        match self.out[u].get(&w) {
            Some(&cur) if cur <= len => false,
            _ => {
                self.out[u].insert(w, len);
                self.inc[w].insert(u, len);
                self.ids[u].insert(w, id.to_string());
                true
            }
        }
    }

    /// Shortest distance u -> target avoiding `skip`, bounded by `limit`.
    /// Returns `None` if the search budget ran out before a conclusion.
    fn witness(&self, u: usize, target: usize, skip: usize, limit: f64, settle_limit: usize) -> Option<f64> {
        let mut dist: BTreeMap<usize, f64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(u, 0.0);
        heap.push(Reverse(Dist(0.0, u)));
        let mut settled = 0usize;
        while let Some(Reverse(Dist(d, v))) = heap.pop() {
            if dist.get(&v).is_some_and(|&b| d > b) {
                continue;
            }
            if v == target {
                return Some(d);
            }
            if d > limit {
                return Some(f64::INFINITY);
            }
            settled += 1;
            if settled > settle_limit {
                return None;
            }
            for (&w, &len) in &self.out[v] {
                if w == skip || self.contracted[w] {
                    continue;
                }
                let nd = d + len;
                if dist.get(&w).is_none_or(|&b| nd < b) {
                    dist.insert(w, nd);
                    heap.push(Reverse(Dist(nd, w)));
                }
            }
        }
        Some(f64::INFINITY)
    }

    /// Shortcuts required if `v` were contracted now.
    fn shortcuts_for(&self, v: usize, settle_limit: usize) -> Vec<(usize, usize, f64)> {
        let mut need = Vec::new();
        for (&u, &lu) in &self.inc[v] {
            if self.contracted[u] {
                continue;
            }
            for (&w, &lw) in &self.out[v] {
                if w == u || self.contracted[w] {
                    continue;
                }
                let via = lu + lw;
                match self.witness(u, w, v, via, settle_limit) {
                    Some(d) if d <= via => {}
                    _ => need.push((u, w, via)),
                }
            }
        }
        need
    }

    fn degree(&self, v: usize) -> usize {
        self.inc[v].keys().filter(|&&u| !self.contracted[u]).count()
            + self.out[v].keys().filter(|&&w| !self.contracted[w]).count()
    }

    fn edge_difference(&self, v: usize, settle_limit: usize) -> i64 {
        self.shortcuts_for(v, settle_limit).len() as i64 - self.degree(v) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64, usize);
impl Eq for Dist {}
impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Contracts nodes until `target_reduction` of them are gone or the best
/// remaining edge difference is positive. The returned graph holds only the
/// surviving nodes, with original edges and shortcuts between them.
pub fn contract_graph(g: &RoadGraph, target_reduction: f64) -> RoadGraph {
    contract_graph_with(
        g,
        &ContractionParams {
            target_reduction,
            ..Default::default()
        },
    )
    .0
}

pub fn contract_graph_with(g: &RoadGraph, params: &ContractionParams) -> (RoadGraph, ContractionStats) {
    contract_graph_keeping(g, params, &[])
}

/// As [`contract_graph_with`], never contracting the nodes flagged in `keep`
/// (indexed like `g.nodes`; missing entries count as not kept).
pub fn contract_graph_keeping(
    g: &RoadGraph,
    params: &ContractionParams,
    keep: &[bool],
) -> (RoadGraph, ContractionStats) {
    let n = g.num_nodes();
    let mut ov = Overlay::new(g);
    let mut stats = ContractionStats::default();
    let target = (params.target_reduction.clamp(0.0, 1.0) * n as f64).floor() as usize;
    let mut queue: BinaryHeap<Reverse<(i64, usize)>> = (0..n)
        .filter(|&v| !keep.get(v).copied().unwrap_or(false))
        .map(|v| Reverse((ov.edge_difference(v, params.witness_settle_limit), v)))
        .collect();
    let mut next_shortcut = 0usize;

    while stats.contracted < target {
        let Some(Reverse((_, v))) = queue.pop() else { break };
        if ov.contracted[v] {
            continue;
        }
        let ed = ov.edge_difference(v, params.witness_settle_limit);
        if let Some(&Reverse((next, _))) = queue.peek() {
            if ed > next {
                queue.push(Reverse((ed, v)));
                stats.lazy_requeues += 1;
                continue;
            }
        }
        if ed > 0 {
            debug!("stopping contraction: best edge difference {ed} > 0");
            break;
        }
        for (u, w, len) in ov.shortcuts_for(v, params.witness_settle_limit) {
            let id = format!("sc{next_shortcut}");
            if ov.set_if_shorter(u, w, len, &id) {
                next_shortcut += 1;
                stats.shortcuts += 1;
            }
        }
        ov.contracted[v] = true;
        stats.contracted += 1;
    }

    let mut remap = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for v in 0..n {
        if !ov.contracted[v] {
            remap[v] = nodes.len();
            nodes.push(g.nodes[v].clone());
        }
    }
    let mut edges = Vec::new();
    for u in 0..n {
        if ov.contracted[u] {
            continue;
        }
        for (&w, &len) in &ov.out[u] {
            if ov.contracted[w] {
                continue;
            }
            edges.push(Edge {
                id: ov.ids[u][&w].clone(),
                tail: remap[u],
                head: remap[w],
                length: len,
            });
        }
    }
    (RoadGraph { nodes, edges }, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::graph::Node;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> RoadGraph {
        RoadGraph::new(
            (0..n)
                .map(|i| Node {
                    id: format!("n{i}"),
                    lat: 0.0,
                    lon: 0.0,
                })
                .collect(),
            edges
                .iter()
                .enumerate()
                .map(|(i, &(t, h, l))| Edge {
                    id: format!("e{i}"),
                    tail: t,
                    head: h,
                    length: l,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn contracting_b_in_path_gives_length_seven() {
        let g = graph(3, &[(0, 1, 3.0), (1, 2, 4.0)]);
        let ov = Overlay::new(&g);
        assert_eq!(ov.edge_difference(1, 100), -1);
        assert_eq!(ov.shortcuts_for(1, 100), vec![(0, 2, 7.0)]);
    }

    #[test]
    fn surviving_distances_match() {
        // two-way square with one chord
        let g = graph(
            4,
            &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0), (2, 3, 1.0), (3, 2, 1.0), (3, 0, 5.0), (0, 3, 5.0), (0, 2, 4.0)],
        );
        let (c, stats) = contract_graph_with(
            &g,
            &ContractionParams {
                target_reduction: 0.5,
                witness_settle_limit: 100,
            },
        );
        assert_eq!(stats.contracted, 2);
        for (i, n) in c.nodes.iter().enumerate() {
            let orig = g.nodes.iter().position(|m| m.id == n.id).unwrap();
            let before = g.distances_from(orig);
            let after = c.distances_from(i);
            for (j, m) in c.nodes.iter().enumerate() {
                let oj = g.nodes.iter().position(|x| x.id == m.id).unwrap();
                assert_eq!(before[oj], after[j]);
            }
        }
    }

    #[test]
    fn witness_avoids_shortcut() {
        // 0->1->2 (2+2) but also 0->2 direct (3)
        let g = graph(3, &[(0, 1, 2.0), (1, 2, 2.0), (0, 2, 3.0)]);
        let ov = Overlay::new(&g);
        assert!(ov.shortcuts_for(1, 100).is_empty());
    }

    #[test]
    fn kept_nodes_survive() {
        let g = graph(3, &[(0, 1, 3.0), (1, 2, 4.0)]);
        let params = ContractionParams {
            target_reduction: 1.0,
            ..Default::default()
        };
        let (c, stats) = contract_graph_keeping(&g, &params, &[false, true, false]);
        assert!(c.nodes.iter().any(|n| n.id == "n1"));
        assert!(stats.contracted <= 2);
    }
}
