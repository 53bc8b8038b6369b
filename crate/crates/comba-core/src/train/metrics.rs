//! Evaluation metrics: argmax accuracy and rank-based ROC AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    RocAuc,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::RocAuc => "roc_auc",
        }
    }
}

/// Fraction of `idx` rows whose argmax logit equals the label. Ties resolve
/// to the lowest class index, matching a plain max scan.
pub fn accuracy(logits: &Tensor, labels: &[u32], idx: &[u32]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("accuracy over an empty index set"));
    }
    let c = logits.shape()[1];
    let mut hits = 0usize;
    for &i in idx {
        let row = logits.row(i as usize);
        let mut best = 0usize;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best as u32 == labels[i as usize] {
            hits += 1;
        }
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// Probability that a uniformly random positive outranks a uniformly random
/// negative, with ties counted half — the Mann–Whitney U statistic scaled to
/// [0, 1], computed through average ranks.
pub fn roc_auc(scores: &[f64], labels: &[u32]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "roc_auc needs both classes present".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!(
            "roc_auc labels must be binary, found {bad}"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN score"));

    // average ranks within tied runs (1-based)
    let mut rank = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            rank[k] = avg;
        }
        i = j + 1;
    }

    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// AUC over the selected rows of a two-class logit matrix; the score is the
/// class-1 logit margin, which orders nodes identically to the class-1
/// softmax probability.
pub fn roc_auc_from_logits(logits: &Tensor, labels: &[u32], idx: &[u32]) -> Result<f64> {
    if logits.shape()[1] != 2 {
        return Err(Error::invalid(format!(
            "roc_auc needs 2 classes, logits have {}",
            logits.shape()[1]
        )));
    }
    if idx.is_empty() {
        return Err(Error::invalid("roc_auc over an empty index set"));
    }
    let scores: Vec<f64> = idx
        .iter()
        .map(|&i| logits.at(i as usize, 1) - logits.at(i as usize, 0))
        .collect();
    let labs: Vec<u32> = idx.iter().map(|&i| labels[i as usize]).collect();
    roc_auc(&scores, &labs)
}

/// Dispatch on the metric kind.
pub fn evaluate(logits: &Tensor, labels: &[u32], idx: &[u32], kind: MetricKind) -> Result<f64> {
    match kind {
        MetricKind::Accuracy => accuracy(logits, labels, idx),
        MetricKind::RocAuc => roc_auc_from_logits(logits, labels, idx),
    }
}
