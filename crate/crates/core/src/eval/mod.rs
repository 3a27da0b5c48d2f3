//! Metrics, the synthetic video generator and the feature-comparison harness.

mod compare;
mod metrics;
mod pipeline;
mod synth;

pub use compare::{
    compare_features, evaluate, project, train_and_evaluate, tune_thresholds, ClassScore, ComboRow, EvalConfig, EvalReport,
};
pub use metrics::{average_precision, precision, ranking_ap, Precision};
pub use pipeline::{encode_all, fit_features, FeatureConfig, Features};
pub use crate::types::{Combo, Fusion};
pub use synth::{synth_embeddings, synth_generate, ClassSpec, EventLen, SynthConfig};
