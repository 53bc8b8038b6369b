//! Exact-distance hop adjacencies.
//!
//! `mats[k-1]` holds entry (i, j) iff the shortest path between i and j has
//! length exactly k. Built by truncated per-source BFS — never by matrix
//! powers, which count walks rather than distances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug)]
pub struct HopAdjacency {
    mats: Vec<CsrMatrix>,
}

impl HopAdjacency {
    pub fn k_max(&self) -> usize {
        self.mats.len()
    }

    /// Hop-k matrix, k 1-based in [1, k_max].
    pub fn mat(&self, k: usize) -> &CsrMatrix {
        &self.mats[k - 1]
    }

    pub fn mats(&self) -> &[CsrMatrix] {
        &self.mats
    }

    pub fn n(&self) -> usize {
        self.mats[0].n()
    }
}

/// Reusable BFS workspace: `seen_at[v] == stamp` marks v visited in the
/// current traversal, so clearing between sources is O(1).
struct BfsScratch {
    seen_at: Vec<u64>,
    stamp: u64,
}

impl BfsScratch {
    fn new(n: usize) -> BfsScratch {
        BfsScratch {
            seen_at: vec![0; n],
            stamp: 0,
        }
    }

    fn begin(&mut self) {
        self.stamp += 1;
    }

    fn mark(&mut self, v: u32) -> bool {
        let slot = &mut self.seen_at[v as usize];
        if *slot == self.stamp {
            false
        } else {
            *slot = self.stamp;
            true
        }
    }
}

/// Nodes of each BFS level 1..=depth from `source` (level 0 excluded).
fn bfs_levels(g: &Graph, source: u32, depth: usize, scratch: &mut BfsScratch) -> Vec<Vec<u32>> {
    scratch.begin();
    scratch.mark(source);
    let mut levels: Vec<Vec<u32>> = Vec::with_capacity(depth);
    let mut frontier = vec![source];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in g.neighbors(u as usize) {
                if scratch.mark(v) {
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            levels.push(next);
            break;
        }
        levels.push(next.clone());
        frontier = next;
    }
    while levels.len() < depth {
        levels.push(Vec::new());
    }
    levels
}

/// Hop matrices A^1..A^k_max by frontier expansion from every source.
/// Parallel over sources; assembly order is fixed by source id, so the result
/// is independent of scheduling.
pub fn hop_adjacency(g: &Graph, k_max: usize) -> Result<HopAdjacency> {
    if k_max == 0 {
        return Err(Error::invalid("hop count must be at least 1"));
    }
    let n = g.n();
    let per_source: Vec<Vec<Vec<u32>>> = (0..n as u32)
        .into_par_iter()
        .map_init(
            || BfsScratch::new(n),
            |scratch, s| bfs_levels(g, s, k_max, scratch),
        )
        .collect();
    let mats = (0..k_max)
        .map(|level| {
            CsrMatrix::from_rows(
                n,
                per_source
                    .iter()
                    .map(|levels| levels[level].clone())
                    .collect(),
            )
        })
        .collect();
    Ok(HopAdjacency { mats })
}

/// Same contract as [`hop_adjacency`], computed the slow obvious way: fill a
/// dense distance table per source with an untruncated queue BFS, then bin
/// pairs by distance. Serves as an independent correctness oracle.
pub fn bfs_distance_oracle(g: &Graph, k_max: usize) -> Result<HopAdjacency> {
    if k_max == 0 {
        return Err(Error::invalid("hop count must be at least 1"));
    }
    let n = g.n();
    let mut rows_by_hop: Vec<Vec<Vec<u32>>> = vec![vec![Vec::new(); n]; k_max];
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if dist[v as usize] == usize::MAX {
                    dist[v as usize] = dist[u] + 1;
                    queue.push_back(v as usize);
                }
            }
        }
        for (v, &d) in dist.iter().enumerate() {
            if d >= 1 && d <= k_max {
                rows_by_hop[d - 1][s].push(v as u32);
            }
        }
    }
    let mats = rows_by_hop
        .into_iter()
        .map(|rows| CsrMatrix::from_rows(n, rows))
        .collect();
    Ok(HopAdjacency { mats })
}

/// Sorted closed ball: `seeds` plus every node within `depth` hops of any
/// seed. Multi-source truncated BFS.
pub fn k_hop_ball(g: &Graph, seeds: &[u32], depth: usize) -> Vec<u32> {
    let mut scratch = BfsScratch::new(g.n());
    scratch.begin();
    let mut members: Vec<u32> = Vec::new();
    let mut frontier: Vec<u32> = Vec::new();
    for &s in seeds {
        if scratch.mark(s) {
            members.push(s);
            frontier.push(s);
        }
    }
    for _ in 0..depth {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in g.neighbors(u as usize) {
                if scratch.mark(v) {
                    members.push(v);
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    members.sort_unstable();
    members
}
