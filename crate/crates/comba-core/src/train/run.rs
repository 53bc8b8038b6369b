//! The training loop: fixed seed partition, masked cross-entropy, Adam,
//! early stopping on the validation metric.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamHyper, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::graph::{partition_batches, BatchSet, Graph};
use crate::model::{comba_forward, eval_logits, ModelParams};
use crate::rng::RngState;
use crate::train::config::{Splits, TrainConfig};
use crate::train::metrics::{evaluate, MetricKind};

/// One epoch's numbers, serialized one-per-line into metrics.jsonl.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: f64,
    pub test: f64,
    /// Wall-clock per epoch; excluded from determinism guarantees.
    pub ms: f64,
}

/// Trained parameters plus the full epoch history.
pub struct TrainOutcome {
    pub model: ModelParams,
    pub params: ParamSet,
    pub history: Vec<MetricsRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub test_at_best: f64,
    pub metric: MetricKind,
}

/// Train on `g` under `cfg`, selecting on the validation metric. The seed
/// partition is drawn once up front unless `resample_batches` asks for a
/// fresh draw each epoch. Parameters are restored to the best-validation
/// snapshot before returning.
/// The batch partition exactly as [`train`] draws it before the first epoch:
/// the config seed forked for partitioning, `ceil(n / num_batches)` seeds per
/// batch. Evaluation tools use this to run a checkpoint under the same
/// batching its training started from.
pub fn partition_for(cfg: &TrainConfig, g: &Graph) -> Result<BatchSet> {
    let seeds_per_batch = g.n().div_ceil(cfg.num_batches.min(g.n()));
    let mut batch_rng = RngState::new(cfg.seed).fork(1);
    partition_batches(g, seeds_per_batch, cfg.hop_len, &mut batch_rng)
}

pub fn train(
    g: &Graph,
    splits: &Splits,
    cfg: &TrainConfig,
    metric: MetricKind,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    splits.validate(g.n())?;
    if splits.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if splits.val.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }

    let root = RngState::new(cfg.seed);
    let spec = cfg.model_spec(g.feature_dim(), g.num_classes());
    let (model, mut params) = ModelParams::build(spec.clone(), &mut root.fork(0))?;
    let seeds_per_batch = g.n().div_ceil(cfg.num_batches.min(g.n()));
    let mut batch_rng = root.fork(1);
    let mut bs = partition_batches(g, seeds_per_batch, cfg.hop_len, &mut batch_rng)?;

    let hyper = AdamHyper {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamHyper::default()
    };
    let labels = g.labels().to_vec();

    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut test_at_best = f64::NAN;
    let mut best_snapshot = params.snapshot_values();
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let t0 = Instant::now();
        if cfg.resample_batches && epoch > 0 {
            bs = partition_batches(g, seeds_per_batch, cfg.hop_len, &mut batch_rng)?;
        }

        // training forward with dropout, masked loss on the train split
        let mut tape = Tape::new();
        let mut bindings = Vec::new();
        let bound = model.bind(&mut tape, &params, &mut bindings);
        let mut drop_rng = root.fork(2 + epoch as u64);
        let logits = comba_forward(&mut tape, &bound, &spec, g, &bs, &mut drop_rng, true)?;
        let loss = tape.softmax_cross_entropy(logits, &labels, &splits.train)?;
        let train_loss = tape.value(loss).item();
        if !train_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training loss became {train_loss} at epoch {epoch}"
            )));
        }
        let grads = tape.backward(loss);
        params.zero_grads();
        params.accumulate_grads(&grads, &bindings);
        drop(tape);
        adam_step(&mut params, &hyper);

        // post-step evaluation without dropout
        let eval = eval_logits(&model, &params, g, &bs)?;
        let val = evaluate(&eval, &labels, &splits.val, metric)?;
        let test = if splits.test.is_empty() {
            f64::NAN
        } else {
            evaluate(&eval, &labels, &splits.test, metric)?
        };

        if val > best_val {
            best_val = val;
            best_epoch = epoch;
            test_at_best = test;
            best_snapshot = params.snapshot_values();
            since_best = 0;
        } else {
            since_best += 1;
        }

        history.push(MetricsRecord {
            epoch,
            train_loss,
            val,
            test,
            ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("epoch {epoch}: loss {train_loss:.5} val {val:.4} test {test:.4}");
        if since_best >= cfg.patience {
            break;
        }
    }

    params.restore_values(&best_snapshot);
    Ok(TrainOutcome {
        model,
        params,
        history,
        best_epoch,
        best_val,
        test_at_best,
        metric,
    })
}
