//! Graph representation, exact hop adjacencies, and seed-ball batching.

mod batch;
mod hops;

pub use batch::{partition_batches, Batch, BatchSet};
pub use hops::{bfs_distance_oracle, hop_adjacency, k_hop_ball, HopAdjacency};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Immutable undirected graph with per-node features and integer labels.
///
/// The adjacency stores both directions of every edge, has no self-loops and
/// no duplicates. Construction validates endpooints and label ranges;
/// duplicate input edges are collapsed (loaders that need to *report* repairs
/// do their own accounting before calling this).
#[derive(Clone, Debug)]
pub struct Graph {
    adj: CsrMatrix,
    features: Tensor,
    labels: Vec<u32>,
    num_classes: usize,
}

impl Graph {
    pub fn new(
        n: usize,
        edges: &[(u32, u32)],
        features: Tensor,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Graph> {
        if features.shape().len() != 2 || features.rows() != n {
            return Err(Error::Validation(format!(
                "feature matrix has shape {:?}, want {} rows",
                features.shape(),
                n
            )));
        }
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {} nodes",
                labels.len(),
                n
            )));
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Validation(format!(
                "label {} out of range for {} classes",
                bad, num_classes
            )));
        }
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
        }
        Ok(Graph {
            adj: CsrMatrix::from_undirected_edges(n, edges),
            features,
            labels,
            num_classes,
        })
    }

    /// Graph without meaningful features/labels (single zero feature column,
    /// one class); used by structural tests and generators mid-build.
    pub fn structure_only(n: usize, edges: &[(u32, u32)]) -> Result<Graph> {
        Graph::new(n, edges, Tensor::zeros(&[n, 1]), vec![0; n], 1)
    }

    pub fn n(&self) -> usize {
        self.adj.n()
    }

    /// Undirected edge count.
    pub fn num_edges(&self) -> usize {
        self.adj.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adj
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        self.adj.row(i)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj.degree(i)
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Replace the feature matrix (row count must match).
    pub fn with_features(mut self, features: Tensor) -> Result<Graph> {
        if features.rows() != self.n() {
            return Err(Error::shape("feature row count mismatch"));
        }
        self.features = features;
        Ok(self)
    }
}

/// Map from global node id to position inside an induced subgraph.
#[derive(Clone, Debug)]
pub struct LocalIndex {
    slots: Vec<Option<u32>>,
}

impl LocalIndex {
    fn from_sorted(n: usize, nodes: &[u32]) -> LocalIndex {
        let mut slots = vec![None; n];
        for (local, &g) in nodes.iter().enumerate() {
            slots[g as usize] = Some(local as u32);
        }
        LocalIndex { slots }
    }

    pub fn local(&self, global: u32) -> Option<u32> {
        self.slots.get(global as usize).copied().flatten()
    }

    pub fn contains(&self, global: u32) -> bool {
        self.local(global).is_some()
    }
}

/// Restrict `g` to `nodes` (sorted, deduplicated global ids). The subgraph
/// keeps an edge iff both endpoints are selected; features and labels are
/// copied in local order.
pub fn induce_subgraph(g: &Graph, nodes: &[u32]) -> Result<(Graph, LocalIndex)> {
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("node list must be sorted and deduplicated"));
    }
    if let Some(&last) = nodes.last() {
        if last as usize >= g.n() {
            return Err(Error::invalid(format!(
                "node {} out of range for {} nodes",
                last,
                g.n()
            )));
        }
    }
    let index = LocalIndex::from_sorted(g.n(), nodes);
    let mut edges = Vec::new();
    for (local_u, &u) in nodes.iter().enumerate() {
        for &v in g.neighbors(u as usize) {
            if v > u {
                if let Some(local_v) = index.local(v) {
                    edges.push((local_u as u32, local_v));
                }
            }
        }
    }
    let features = g.features.gather_rows(nodes);
    let labels: Vec<u32> = nodes.iter().map(|&i| g.labels[i as usize]).collect();
    let sub = Graph::new(nodes.len(), &edges, features, labels, g.num_classes)?;
    Ok((sub, index))
}
