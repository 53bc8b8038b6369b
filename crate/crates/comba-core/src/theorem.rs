//! Empirical verifier for the cross-batch error bound.
//!
//! Three one-layer update rules are compared on the same batched graph:
//!
//! * **ideal** — the layer evaluated on the full graph, restricted to each
//!   batch's members. This is the update every batch would see if no
//!   partitioning had happened.
//! * **cross** — each batch computes the layer on its own subgraph and keeps
//!   the rows of its own seeds; rows of *foreign* seeds (members that are
//!   seeds of another batch) are imported from that batch's locally computed
//!   update; every remaining row carries its input forward unchanged.
//! * **no_cross** — like cross but without imports: only the batch's own seed
//!   rows are updated, everything else is carried forward.
//!
//! Because every batch contains the full 1-hop ball around its seeds, a seed
//! row computed on the subgraph agrees with the full-graph row bit for bit,
//! and so does the row a foreign seed's home batch exports. The cross update
//! therefore only ever *replaces* stale carried rows with exact ones, which
//! is why its mean squared deviation from the ideal update can never exceed
//! the no-import variant's. [`verify_inequality`] checks exactly that, over
//! randomized graphs, features, weights, and partitions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{hop_adjacency, BatchSet, Graph};
use crate::model::gnn_hop_layer_tensor;
use crate::rng::RngState;
use crate::sparse::SpmmMode;
use crate::tensor::Tensor;

/// Slack allowed when comparing the two error functionals; the bound holds
/// exactly, so this only absorbs accumulation noise in the sums themselves.
pub const GAP_TOLERANCE: f64 = 1e-9;

/// Which of the three update rules [`layer_update`] applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationVariant {
    /// Full-graph layer output for every member row.
    Ideal,
    /// Own seed rows computed locally, foreign seed rows imported from their
    /// home batch, all other rows carried forward.
    Cross,
    /// Own seed rows only; foreign seeds are carried forward like any other
    /// non-seed member.
    NoCross,
}

/// Apply one aggregation layer under `variant` to every batch.
///
/// The layer is `relu(spmm(A, X) · w)` with `A` the hop-1 adjacency (of the
/// full graph for [`AggregationVariant::Ideal`], of each batch subgraph
/// otherwise), `X` the graph's node features gathered per batch, and `w` a
/// weight matrix shared by all batches. Returns one output matrix per batch,
/// rows aligned with that batch's member list.
pub fn layer_update(
    variant: AggregationVariant,
    g: &Graph,
    bs: &BatchSet,
    w: &Tensor,
    mode: SpmmMode,
) -> Result<Vec<Tensor>> {
    if bs.n() != g.n() {
        return Err(Error::InvalidArgument(format!(
            "batch set covers {} nodes but graph has {}",
            bs.n(),
            g.n()
        )));
    }
    // Carried rows and updated rows live in the same output matrix, so the
    // layer must preserve the feature width.
    if w.shape().len() != 2 || w.rows() != g.feature_dim() || w.cols() != g.feature_dim() {
        return Err(Error::InvalidArgument(format!(
            "weight must be {d}x{d} to match the feature width",
            d = g.feature_dim()
        )));
    }

    let x_full = g.features();
    if let AggregationVariant::Ideal = variant {
        let full = hop_adjacency(g, 1)?;
        let y = gnn_hop_layer_tensor(full.mat(1), mode, x_full, w)?;
        return Ok(bs
            .batches()
            .iter()
            .map(|b| y.gather_rows(&b.members))
            .collect());
    }

    // Per-batch inputs and the layer evaluated on each batch's own subgraph.
    let local_in: Vec<Tensor> = bs
        .batches()
        .iter()
        .map(|b| x_full.gather_rows(&b.members))
        .collect();
    let local_f: Vec<Tensor> = bs
        .batches()
        .iter()
        .zip(&local_in)
        .map(|(b, x)| gnn_hop_layer_tensor(b.sub_hops.mat(1), mode, x, w))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(bs.num_batches());
    for (i, b) in bs.batches().iter().enumerate() {
        let mut y = local_in[i].clone();
        for &p in &b.seed_local {
            let p = p as usize;
            y.row_mut(p).copy_from_slice(local_f[i].row(p));
        }
        if variant == AggregationVariant::Cross {
            for (j, locs) in &b.cross_occurrences {
                for &p in locs {
                    let p = p as usize;
                    let v = b.members[p];
                    let q = bs
                        .batch(*j)
                        .local_index
                        .local(v)
                        .expect("foreign seed is a member of its home batch")
                        as usize;
                    y.row_mut(p).copy_from_slice(local_f[*j].row(q));
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// Mean squared row deviation between two per-batch update results:
/// the squared differences are summed per batch, divided by that batch's
/// member count, and the per-batch figures are averaged.
pub fn approximation_error(got: &[Tensor], reference: &[Tensor]) -> Result<f64> {
    if got.is_empty() || got.len() != reference.len() {
        return Err(Error::InvalidArgument(
            "need the same nonzero number of per-batch outputs on both sides".into(),
        ));
    }
    let mut total = 0.0;
    for (a, b) in got.iter().zip(reference) {
        if a.shape() != b.shape() || a.rows() == 0 {
            return Err(Error::InvalidArgument(
                "per-batch outputs must have matching nonempty shapes".into(),
            ));
        }
        let mut batch_sum = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            let d = x - y;
            batch_sum += d * d;
        }
        total += batch_sum / a.rows() as f64;
    }
    Ok(total / got.len() as f64)
}

/// Outcome of a single randomized comparison of the three update rules.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub nodes: usize,
    pub num_batches: usize,
    pub err_cross: f64,
    pub err_nocross: f64,
    /// `err_nocross - err_cross`; the bound says this is never negative.
    pub gap: f64,
    /// Every own-seed row of the cross update equals the ideal row bit for bit.
    pub seed_rows_exact: bool,
    /// Every row outside the update support equals its input bit for bit.
    pub carried_rows_exact: bool,
}

/// Aggregate over all trials of [`verify_inequality`].
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub trials: Vec<TrialRecord>,
    /// Trials where `err_cross` exceeded `err_nocross` beyond [`GAP_TOLERANCE`].
    pub violations: usize,
    pub min_gap: f64,
    pub all_hold: bool,
}

/// Run `trials` randomized comparisons and report whether
/// `err_cross <= err_nocross + GAP_TOLERANCE` held in every one.
///
/// Each trial draws an Erdős–Rényi graph with 10–60 nodes, Gaussian features
/// and weights, a random aggregation mode, and a random partition of the
/// nodes into 2–5 seed groups (occasionally leaving some nodes unseeded so
/// the carry-forward path is exercised). Trials derive their own generator
/// from `rng`, so a given seed always reproduces the same report.
pub fn verify_inequality(trials: usize, rng: &RngState) -> Result<ErrorReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial required".into()));
    }

    let mut records = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut tr = rng.fork(trial as u64);
        let (g, bs, w, mode) = random_instance(&mut tr)?;

        let ideal = layer_update(AggregationVariant::Ideal, &g, &bs, &w, mode)?;
        let cross = layer_update(AggregationVariant::Cross, &g, &bs, &w, mode)?;
        let nocross = layer_update(AggregationVariant::NoCross, &g, &bs, &w, mode)?;

        let err_cross = approximation_error(&cross, &ideal)?;
        let err_nocross = approximation_error(&nocross, &ideal)?;

        let mut seed_rows_exact = true;
        let mut carried_rows_exact = true;
        for (i, b) in bs.batches().iter().enumerate() {
            let mut gated = vec![false; b.num_members()];
            for &p in &b.seed_local {
                gated[p as usize] = true;
            }
            for (_, locs) in &b.cross_occurrences {
                for &p in locs {
                    gated[p as usize] = true;
                }
            }
            for &p in &b.seed_local {
                if cross[i].row(p as usize) != ideal[i].row(p as usize) {
                    seed_rows_exact = false;
                }
            }
            for (p, &on) in gated.iter().enumerate() {
                if !on && cross[i].row(p) != g.features().row(b.members[p] as usize) {
                    carried_rows_exact = false;
                }
            }
        }

        records.push(TrialRecord {
            trial,
            nodes: g.n(),
            num_batches: bs.num_batches(),
            err_cross,
            err_nocross,
            gap: err_nocross - err_cross,
            seed_rows_exact,
            carried_rows_exact,
        });
    }

    let violations = records.iter().filter(|r| r.gap < -GAP_TOLERANCE).count();
    let min_gap = records.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    Ok(ErrorReport {
        violations,
        min_gap,
        all_hold: violations == 0,
        trials: records,
    })
}

/// Random graph + partition + shared layer weights for one trial.
fn random_instance(rng: &mut RngState) -> Result<(Graph, BatchSet, Tensor, SpmmMode)> {
    let n = 10 + rng.below(51);
    let p = rng.uniform(0.05, 0.3);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            if rng.bernoulli(p) {
                edges.push((u, v));
            }
        }
    }
    let dim = 1 + rng.below(6);
    let mut feats = Tensor::zeros(&[n, dim]);
    for i in 0..n {
        for j in 0..dim {
            feats.set(i, j, rng.normal());
        }
    }
    let g = Graph::structure_only(n, &edges)?.with_features(feats)?;

    let mut order: Vec<u32> = (0..n as u32).collect();
    rng.shuffle(&mut order);
    let m = 2 + rng.below(4);
    let leave_unseeded = rng.bernoulli(0.3);
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (idx, &v) in order.iter().enumerate() {
        // The first m nodes go one per group so no group is ever empty.
        if idx >= m && leave_unseeded && rng.bernoulli(0.15) {
            continue;
        }
        groups[idx % m].push(v);
    }
    let bs = BatchSet::from_seed_groups(&g, &groups, 1)?;

    let mut w = Tensor::zeros(&[dim, dim]);
    for i in 0..dim {
        for j in 0..dim {
            w.set(i, j, rng.normal());
        }
    }
    let mode = if rng.bernoulli(0.5) {
        SpmmMode::Raw
    } else {
        SpmmMode::RowNormalized
    };
    Ok((g, bs, w, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BatchSet;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    /// Path 0-1-2-3 with scalar features [1,2,3,4].
    fn p4() -> Graph {
        Graph::structure_only(4, &[(0, 1), (1, 2), (2, 3)])
            .unwrap()
            .with_features(Tensor::from_rows(&[
                vec![1.0],
                vec![2.0],
                vec![3.0],
                vec![4.0],
            ]))
            .unwrap()
    }

    fn unit_weight() -> Tensor {
        Tensor::from_rows(&[vec![1.0]])
    }

    #[test]
    fn ideal_compared_to_itself_has_zero_error() {
        let g = p4();
        let bs = BatchSet::from_seed_groups(&g, &[vec![0, 1], vec![2, 3]], 1).unwrap();
        let ideal = layer_update(
            AggregationVariant::Ideal,
            &g,
            &bs,
            &unit_weight(),
            SpmmMode::Raw,
        )
        .unwrap();
        assert_eq!(approximation_error(&ideal, &ideal).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_row_difference_scores_inverse_batch_size() {
        let g = p4();
        let bs = BatchSet::from_seed_groups(&g, &[vec![0, 1, 2, 3]], 1).unwrap();
        let ideal = layer_update(
            AggregationVariant::Ideal,
            &g,
            &bs,
            &unit_weight(),
            SpmmMode::Raw,
        )
        .unwrap();
        let mut bumped = ideal.clone();
        bumped[0].row_mut(2)[0] += 1.0;
        // One batch of 4 members, one row off by a unit vector: error 1/4.
        close(approximation_error(&bumped, &ideal).unwrap(), 0.25, 1e-15);
    }

    #[test]
    fn hand_computed_two_batch_path_instance() {
        let g = p4();
        let bs = BatchSet::from_seed_groups(&g, &[vec![0, 1], vec![2, 3]], 1).unwrap();
        let w = unit_weight();

        // Full-graph sums: node 0 -> 2, 1 -> 1+3, 2 -> 2+4, 3 -> 3.
        let ideal = layer_update(AggregationVariant::Ideal, &g, &bs, &w, SpmmMode::Raw).unwrap();
        assert_eq!(ideal[0].data(), &[2.0, 4.0, 6.0]);
        assert_eq!(ideal[1].data(), &[4.0, 6.0, 3.0]);

        // Batch 0 = ball {0,1,2}: its subgraph misses edge 2-3, so the local
        // row for node 2 is 2, not the full-graph 6. The cross update imports
        // 6 from batch 1, where node 2 is a seed with its whole neighborhood.
        let local0 = gnn_hop_layer_tensor(
            bs.batch(0).sub_hops.mat(1),
            SpmmMode::Raw,
            &g.features().gather_rows(&bs.batch(0).members),
            &w,
        )
        .unwrap();
        assert_eq!(local0.row(2), &[2.0]);
        let cross = layer_update(AggregationVariant::Cross, &g, &bs, &w, SpmmMode::Raw).unwrap();
        assert_eq!(cross[0].data(), &[2.0, 4.0, 6.0]);
        assert_eq!(cross[1].data(), &[4.0, 6.0, 3.0]);
        assert_eq!(approximation_error(&cross, &ideal).unwrap(), 0.0);

        // Without imports the foreign rows stay at their inputs (3 and 2).
        let nocross =
            layer_update(AggregationVariant::NoCross, &g, &bs, &w, SpmmMode::Raw).unwrap();
        assert_eq!(nocross[0].data(), &[2.0, 4.0, 3.0]);
        assert_eq!(nocross[1].data(), &[2.0, 6.0, 3.0]);
        // (1/2) * ((3-6)^2 / 3 + (2-4)^2 / 3) = 13/6.
        close(
            approximation_error(&nocross, &ideal).unwrap(),
            13.0 / 6.0,
            1e-12,
        );
    }

    #[test]
    fn all_nodes_seeded_in_one_batch_collapses_the_variants() {
        let g = p4();
        let bs = BatchSet::from_seed_groups(&g, &[vec![0, 1, 2, 3]], 1).unwrap();
        let w = unit_weight();
        for mode in [SpmmMode::Raw, SpmmMode::RowNormalized] {
            let ideal = layer_update(AggregationVariant::Ideal, &g, &bs, &w, mode).unwrap();
            let cross = layer_update(AggregationVariant::Cross, &g, &bs, &w, mode).unwrap();
            let nocross = layer_update(AggregationVariant::NoCross, &g, &bs, &w, mode).unwrap();
            assert_eq!(ideal[0].data(), cross[0].data());
            assert_eq!(ideal[0].data(), nocross[0].data());
            assert_eq!(approximation_error(&cross, &ideal).unwrap(), 0.0);
            assert_eq!(approximation_error(&nocross, &ideal).unwrap(), 0.0);
        }
    }

    #[test]
    fn unseeded_rows_carry_their_input_in_both_gated_variants() {
        // Seeds {0} and {3} on the path: node 1 lands in batch 0's ball and
        // node 2 in batch 1's, but neither is anyone's seed.
        let g = p4();
        let bs = BatchSet::from_seed_groups(&g, &[vec![0], vec![3]], 1).unwrap();
        let w = unit_weight();
        let cross = layer_update(AggregationVariant::Cross, &g, &bs, &w, SpmmMode::Raw).unwrap();
        let nocross =
            layer_update(AggregationVariant::NoCross, &g, &bs, &w, SpmmMode::Raw).unwrap();
        for out in [&cross, &nocross] {
            for (i, b) in bs.batches().iter().enumerate() {
                for (p, &v) in b.members.iter().enumerate() {
                    if bs.home_of(v).is_none() {
                        assert_eq!(out[i].row(p), g.features().row(v as usize));
                    }
                }
            }
        }
        // The configuration really does exercise the carry path.
        assert!(bs
            .batches()
            .iter()
            .any(|b| b.members.iter().any(|&v| bs.home_of(v).is_none())));
    }

    #[test]
    fn seed_rows_match_the_full_graph_update_bit_for_bit() {
        // Subgraph and full-graph evaluations traverse neighbors in the same
        // order, so seed rows must agree exactly, not just approximately.
        let mut rng = RngState::new(404);
        let (g, bs, w, _) = random_instance(&mut rng).unwrap();
        for mode in [SpmmMode::Raw, SpmmMode::RowNormalized] {
            let ideal = layer_update(AggregationVariant::Ideal, &g, &bs, &w, mode).unwrap();
            let cross = layer_update(AggregationVariant::Cross, &g, &bs, &w, mode).unwrap();
            let (mut seed_rows, mut imported_rows) = (0, 0);
            for (i, b) in bs.batches().iter().enumerate() {
                for &p in &b.seed_local {
                    assert_eq!(cross[i].row(p as usize), ideal[i].row(p as usize));
                    seed_rows += 1;
                }
                // Imported rows are exact too: the home batch holds the
                // foreign seed's entire neighborhood.
                for (_, locs) in &b.cross_occurrences {
                    for &p in locs {
                        assert_eq!(cross[i].row(p as usize), ideal[i].row(p as usize));
                        imported_rows += 1;
                    }
                }
            }
            assert!(seed_rows > 0 && imported_rows > 0);
        }
    }

    #[test]
    fn errors_are_invariant_under_node_relabeling() {
        let mut rng = RngState::new(11);
        let n = 20usize;
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.bernoulli(0.2) {
                    edges.push((u, v));
                }
            }
        }
        let mut feats = Tensor::zeros(&[n, 3]);
        for i in 0..n {
            for j in 0..3 {
                feats.set(i, j, rng.normal());
            }
        }
        let g1 = Graph::structure_only(n, &edges)
            .unwrap()
            .with_features(feats.clone())
            .unwrap();
        let groups1 = vec![
            (0..7u32).collect::<Vec<_>>(),
            (7..14u32).collect(),
            (14..20u32).collect(),
        ];

        // Relabel every node through a fixed permutation.
        let mut perm: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut perm);
        let edges2: Vec<(u32, u32)> = edges
            .iter()
            .map(|&(u, v)| (perm[u as usize], perm[v as usize]))
            .collect();
        let mut feats2 = Tensor::zeros(&[n, 3]);
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..3 {
                feats2.set(p as usize, j, feats.row(i)[j]);
            }
        }
        let g2 = Graph::structure_only(n, &edges2)
            .unwrap()
            .with_features(feats2)
            .unwrap();
        let groups2: Vec<Vec<u32>> = groups1
            .iter()
            .map(|grp| grp.iter().map(|&v| perm[v as usize]).collect())
            .collect();

        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                w.set(i, j, rng.normal());
            }
        }

        for mode in [SpmmMode::Raw, SpmmMode::RowNormalized] {
            let mut errs = Vec::new();
            for (g, groups) in [(&g1, &groups1), (&g2, &groups2)] {
                let bs = BatchSet::from_seed_groups(g, groups, 1).unwrap();
                let ideal = layer_update(AggregationVariant::Ideal, g, &bs, &w, mode).unwrap();
                let cross = layer_update(AggregationVariant::Cross, g, &bs, &w, mode).unwrap();
                let nocross = layer_update(AggregationVariant::NoCross, g, &bs, &w, mode).unwrap();
                errs.push((
                    approximation_error(&cross, &ideal).unwrap(),
                    approximation_error(&nocross, &ideal).unwrap(),
                ));
            }
            close(errs[0].0, errs[1].0, 1e-9);
            close(errs[0].1, errs[1].1, 1e-9);
        }
    }

    #[test]
    fn fifty_random_trials_all_satisfy_the_bound() {
        let report = verify_inequality(50, &RngState::new(7)).unwrap();
        assert_eq!(report.trials.len(), 50);
        assert!(report.all_hold);
        assert_eq!(report.violations, 0);
        assert!(report.min_gap >= -GAP_TOLERANCE);
        for r in &report.trials {
            assert!(r.err_cross.is_finite() && r.err_nocross.is_finite());
            assert!(r.err_cross <= r.err_nocross + GAP_TOLERANCE);
            assert!(
                r.seed_rows_exact,
                "trial {} lost seed-row exactness",
                r.trial
            );
            assert!(
                r.carried_rows_exact,
                "trial {} lost carry exactness",
                r.trial
            );
        }
        // The bound should not be holding vacuously.
        assert!(report.trials.iter().any(|r| r.err_nocross > 1e-6));
        assert!(report.trials.iter().any(|r| r.gap > 1e-6));
    }

    #[test]
    fn reports_are_deterministic_per_seed() {
        let a = verify_inequality(8, &RngState::new(99)).unwrap();
        let b = verify_inequality(8, &RngState::new(99)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = verify_inequality(8, &RngState::new(100)).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn zero_trials_is_rejected() {
        assert!(matches!(
            verify_inequality(0, &RngState::new(1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let g = p4();
        let bs = BatchSet::from_seed_groups(&g, &[vec![0, 1], vec![2, 3]], 1).unwrap();
        let bad_w = Tensor::from_rows(&[vec![1.0], vec![1.0]]);
        assert!(matches!(
            layer_update(AggregationVariant::Ideal, &g, &bs, &bad_w, SpmmMode::Raw),
            Err(Error::InvalidArgument(_))
        ));

        let a = vec![Tensor::zeros(&[2, 2])];
        let b = vec![Tensor::zeros(&[3, 2])];
        assert!(matches!(
            approximation_error(&a, &b),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            approximation_error(&[], &[]),
            Err(Error::InvalidArgument(_))
        ));
    }
}
