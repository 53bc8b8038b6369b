//! Training loop, metrics, ablation comparison, and the scaling bench.

pub mod ablation;
pub mod config;
pub mod metrics;
pub mod run;
pub mod scaling;

pub use ablation::{run_ablation, AblationRow};
pub use config::{Splits, TrainConfig};
pub use metrics::{accuracy, evaluate, roc_auc, roc_auc_from_logits, MetricKind};
pub use run::{partition_for, train, MetricsRecord, TrainOutcome};
pub use scaling::{bench_scaling, ScalingReport, ScalingRow};
