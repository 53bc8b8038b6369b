//! Seed-ball batches.
//!
//! Every node is assigned to exactly one batch as a *seed*; the batch then
//! contains the full closed k̂-hop ball around its seeds as members. Members
//! that are seeds of other batches are tracked in `cross_occurrences` — they
//! are the rows through which batches exchange information.

use crate::error::{Error, Result};
use crate::graph::hops::{hop_adjacency, k_hop_ball, HopAdjacency};
use crate::graph::{induce_subgraph, Graph, LocalIndex};
use crate::rng::RngState;

#[derive(Clone, Debug)]
pub struct Batch {
    /// Seed nodes, sorted global ids.
    pub seeds: Vec<u32>,
    /// Closed k̂-hop ball around the seeds, sorted global ids.
    pub members: Vec<u32>,
    /// Positions of the seeds inside `members`.
    pub seed_local: Vec<u32>,
    /// Global → local position in `members`.
    pub local_index: LocalIndex,
    /// Graph induced on `members`.
    pub subgraph: Graph,
    /// Hop matrices of the induced subgraph.
    pub sub_hops: HopAdjacency,
    /// For each other batch j with seeds among our members: (j, local
    /// positions of those seeds), sorted by j.
    pub cross_occurrences: Vec<(usize, Vec<u32>)>,
}

impl Batch {
    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    /// Local positions of members that are seeds of batch `j`.
    pub fn foreign_seed_locals(&self, j: usize) -> &[u32] {
        self.cross_occurrences
            .iter()
            .find(|(b, _)| *b == j)
            .map(|(_, locs)| locs.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Clone, Debug)]
pub struct BatchSet {
    batches: Vec<Batch>,
    k_max: usize,
    n: usize,
    /// home[v] = index of the batch holding v as a seed, if any.
    home: Vec<Option<u32>>,
}

impl BatchSet {
    /// Build batches from explicit seed groups. Groups must be nonempty and
    /// pairwise disjoint; they need not cover the node set (useful for
    /// focused tests), though [`partition_batches`] always covers it.
    pub fn from_seed_groups(g: &Graph, groups: &[Vec<u32>], k_max: usize) -> Result<BatchSet> {
        if k_max == 0 {
            return Err(Error::invalid("hop count must be at least 1"));
        }
        if groups.is_empty() {
            return Err(Error::invalid("at least one seed group required"));
        }
        let n = g.n();
        let mut home: Vec<Option<u32>> = vec![None; n];
        for (i, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::invalid(format!("seed group {i} is empty")));
            }
            for &s in group {
                if s as usize >= n {
                    return Err(Error::invalid(format!("seed {s} out of range")));
                }
                if home[s as usize].replace(i as u32).is_some() {
                    return Err(Error::invalid(format!(
                        "node {s} appears in more than one seed group"
                    )));
                }
            }
        }

        let mut batches = Vec::with_capacity(groups.len());
        for group in groups {
            let mut seeds = group.clone();
            seeds.sort_unstable();
            let members = k_hop_ball(g, &seeds, k_max);
            let (subgraph, local_index) = induce_subgraph(g, &members)?;
            let sub_hops = hop_adjacency(&subgraph, k_max)?;
            let seed_local = seeds
                .iter()
                .map(|&s| local_index.local(s).expect("seed inside own ball"))
                .collect();
            batches.push(Batch {
                seeds,
                members,
                seed_local,
                local_index,
                subgraph,
                sub_hops,
                cross_occurrences: Vec::new(),
            });
        }

        for (i, batch) in batches.iter_mut().enumerate() {
            let mut per_batch: std::collections::BTreeMap<usize, Vec<u32>> = Default::default();
            for (local, &m) in batch.members.iter().enumerate() {
                if let Some(j) = home[m as usize] {
                    if j as usize != i {
                        per_batch.entry(j as usize).or_default().push(local as u32);
                    }
                }
            }
            batch.cross_occurrences = per_batch.into_iter().collect();
        }

        Ok(BatchSet {
            batches,
            k_max,
            n,
            home,
        })
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn batch(&self, i: usize) -> &Batch {
        &self.batches[i]
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Batch owning `v` as a seed.
    pub fn home_of(&self, v: u32) -> Option<usize> {
        self.home[v as usize].map(|b| b as usize)
    }

    /// True when every node is a seed of some batch.
    pub fn covers_all_nodes(&self) -> bool {
        self.home.iter().all(|h| h.is_some())
    }
}

/// Shuffle the node set with `rng`, chunk it into ⌈n/batch_size⌉ seed groups
/// of `batch_size` (last one possibly smaller), and expand each group to its
/// k̂-hop ball.
pub fn partition_batches(
    g: &Graph,
    batch_size: usize,
    k_max: usize,
    rng: &mut RngState,
) -> Result<BatchSet> {
    let n = g.n();
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch_size must be in [1, {n}], got {batch_size}"
        )));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    rng.shuffle(&mut order);
    let groups: Vec<Vec<u32>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    BatchSet::from_seed_groups(g, &groups, k_max)
}
