use serde::Serialize;

use super::windows::TimeWindows;
use crate::instance::{ArcIndex, Instance, TripIndex, TIME_TOL};

/// Trips on one arc that may delay each other, with the ordered pairs whose
/// windows overlap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictingSet {
    pub arc: ArcIndex,
    /// Ordered pairs `(r, r')` where `r` may enter while `r'` is on the arc.
    pub pairs: Vec<(TripIndex, TripIndex)>,
    /// Sorted member trips.
    pub trips: Vec<TripIndex>,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Ordered pairs on `a` whose entry window of the first trip meets the
/// occupancy window of the second.
pub fn overlapping_pairs(inst: &Instance, tw: &TimeWindows, a: ArcIndex) -> Vec<(TripIndex, TripIndex)> {
    let on = inst.trips_on_arc(a);
    let win: Vec<(f64, f64, f64)> = on
        .iter()
        .map(|&r| {
            let p = inst.position(r, a).expect("trip listed on arc");
            (tw.earliest_entry(r, p), tw.latest_entry(r, p), tw.latest_exit(r, p))
        })
        .collect();
    let mut pairs = Vec::new();
    for (i, &r) in on.iter().enumerate() {
        for (j, &o) in on.iter().enumerate() {
            if i != j && win[i].0 <= win[j].2 + TIME_TOL && win[j].0 <= win[i].1 + TIME_TOL {
                pairs.push((r, o));
            }
        }
    }
    pairs
}

/// Partitions every arc's overlapping pairs into connected groups and keeps
/// the groups where some trip is first in at least as many pairs as the
/// arc's first threshold.
pub fn compute_conflicting_sets(inst: &Instance, tw: &TimeWindows) -> Vec<ConflictingSet> {
    let mut sets = Vec::new();
    for a in 0..inst.num_arcs() {
        let threshold = inst.arc(a).ttf.first_threshold();
        if !threshold.is_finite() {
            continue;
        }
        let on = inst.trips_on_arc(a);
        if on.len() < 2 {
            continue;
        }
        let local = |r: TripIndex| on.binary_search(&r).expect("sorted trips on arc");
        let pairs = overlapping_pairs(inst, tw, a);
        let mut uf = UnionFind::new(on.len());
        for &(r, o) in &pairs {
            uf.union(local(r), local(o));
        }
        let mut groups: Vec<Vec<(TripIndex, TripIndex)>> = vec![Vec::new(); on.len()];
        for &(r, o) in &pairs {
            let root = uf.find(local(r));
            groups[root].push((r, o));
        }
        for group in groups.into_iter().filter(|g| !g.is_empty()) {
            let mut first_count = vec![0u32; on.len()];
            for &(r, _) in &group {
                first_count[local(r)] += 1;
            }
            if first_count.iter().all(|&c| (c as f64) < threshold) {
                continue;
            }
            let mut trips: Vec<TripIndex> = group.iter().flat_map(|&(r, o)| [r, o]).collect();
            trips.sort_unstable();
            trips.dedup();
            sets.push(ConflictingSet {
                arc: a,
                pairs: group,
                trips,
            });
        }
    }
    sets
}
