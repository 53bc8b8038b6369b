//! Ablation harness: the full model against its two switched-off variants,
//! trained over a shared list of seeds.

use serde::Serialize;

use crate::autodiff::ParamSet;
use crate::error::Result;
use crate::graph::Graph;
use crate::model::ModelParams;
use crate::rng::RngState;
use crate::train::config::{Splits, TrainConfig};
use crate::train::metrics::MetricKind;
use crate::train::run::train;

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    /// Test metric at the best-validation epoch, one entry per seed.
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the seed list.
    pub std: f64,
    pub param_count: usize,
}

fn summarize(variant: &str, scores: Vec<f64>, param_count: usize) -> AblationRow {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64;
    AblationRow {
        variant: variant.to_string(),
        scores,
        mean,
        std: var.sqrt(),
        param_count,
    }
}

fn variant_config(base: &TrainConfig, variant: &str) -> TrainConfig {
    let mut cfg = base.clone();
    match variant {
        "no_cross_batch" => cfg.no_cross_batch = true,
        "no_context_gating" => cfg.no_context_gating = true,
        _ => {}
    }
    cfg
}

fn param_count(g: &Graph, cfg: &TrainConfig) -> Result<usize> {
    let spec = cfg.model_spec(g.feature_dim(), g.num_classes());
    let (_m, ps): (ModelParams, ParamSet) = ModelParams::build(spec, &mut RngState::new(0))?;
    Ok(ps.num_scalars())
}

/// Train `full`, `no_cross_batch`, and `no_context_gating` with identical
/// seeds and report per-variant mean ± std of the test metric.
pub fn run_ablation(
    g: &Graph,
    splits: &Splits,
    base: &TrainConfig,
    metric: MetricKind,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for variant in ["full", "no_cross_batch", "no_context_gating"] {
        let cfg = variant_config(base, variant);
        let mut scores = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut cfg = cfg.clone();
            cfg.seed = seed;
            let out = train(g, splits, &cfg, metric)?;
            scores.push(out.test_at_best);
            log::info!(
                "{variant} seed {seed}: val {:.4} test {:.4}",
                out.best_val,
                out.test_at_best
            );
        }
        rows.push(summarize(variant, scores, param_count(g, &cfg)?));
    }
    Ok(rows)
}
