//! Runtime scaling over graph size at a fixed batch count.
//!
//! Each size targets nodes + edges ≈ size via an Erdős–Rényi graph with
//! mean degree 6 (so n ≈ size/4). Epochs time the full optimization step —
//! forward, loss, backward, update — and exclude graph construction.

use std::time::Instant;

use serde::Serialize;

use crate::autodiff::{adam_step, AdamHyper, Tape};
use crate::data::synthetic::{generate_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::graph::partition_batches;
use crate::model::{comba_forward, ModelParams};
use crate::rng::RngState;
use crate::train::config::TrainConfig;

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    /// Requested nodes + edges.
    pub size: usize,
    pub nodes: usize,
    pub edges: usize,
    /// Median over the timed epochs.
    pub ms_per_epoch: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of ln(ms) against ln(nodes + edges).
    pub slope: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Slope of the least-squares line through (x, y) pairs.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    cov / var
}

pub fn bench_scaling(sizes: &[usize], cfg: &TrainConfig, epochs: usize) -> Result<ScalingReport> {
    if sizes.len() < 2 {
        return Err(Error::invalid("scaling needs at least 2 sizes"));
    }
    if epochs < 3 {
        return Err(Error::invalid("scaling needs at least 3 timed epochs"));
    }
    cfg.validate()?;
    let mut sizes: Vec<usize> = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();

    let mut rows = Vec::with_capacity(sizes.len());
    let mut points = Vec::with_capacity(sizes.len());
    for &size in &sizes {
        let n = (size / 4).max(16);
        let p = (6.0 / (n as f64 - 1.0)).min(1.0);
        let bundle = generate_synthetic(&SyntheticSpec::er(n, p, 1_000 + size as u64))?;
        let g = &bundle.graph;

        // setup outside the timed region
        let spec = cfg.model_spec(g.feature_dim(), g.num_classes());
        let root = RngState::new(cfg.seed);
        let (model, mut params) = ModelParams::build(spec.clone(), &mut root.fork(0))?;
        let seeds_per_batch = g.n().div_ceil(cfg.num_batches.min(g.n()));
        let bs = partition_batches(g, seeds_per_batch, cfg.hop_len, &mut root.fork(1))?;
        let hyper = AdamHyper {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamHyper::default()
        };
        let labels = g.labels().to_vec();

        let mut times = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let t0 = Instant::now();
            let mut tape = Tape::new();
            let mut bindings = Vec::new();
            let bound = model.bind(&mut tape, &params, &mut bindings);
            let mut drop_rng = root.fork(2 + epoch as u64);
            let logits = comba_forward(&mut tape, &bound, &spec, g, &bs, &mut drop_rng, true)?;
            let loss = tape.softmax_cross_entropy(logits, &labels, &bundle.splits.train)?;
            let grads = tape.backward(loss);
            params.zero_grads();
            params.accumulate_grads(&grads, &bindings);
            drop(tape);
            adam_step(&mut params, &hyper);
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }

        let ms = median(times).max(1e-3);
        let work = g.n() + g.num_edges();
        rows.push(ScalingRow {
            size,
            nodes: g.n(),
            edges: g.num_edges(),
            ms_per_epoch: ms,
        });
        points.push(((work as f64).ln(), ms.ln()));
        log::info!(
            "size {size}: n={} e={} {:.2} ms/epoch",
            g.n(),
            g.num_edges(),
            ms
        );
    }

    Ok(ScalingReport {
        slope: fit_slope(&points),
        rows,
    })
}
