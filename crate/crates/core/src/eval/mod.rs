//! Metrics and the replicated experiment harness.

mod harness;
mod metrics;
mod output;
mod split;

pub use harness::{
    run_replicated, GeneratorTemplate, MetricReport, RepFailure, RepMetrics, RepRecord, SweepAxis,
    SweepReport, SweepSpec, SCHEMA_VERSION,
};
pub use metrics::{
    abs_error, auc_macro_ovr, auc_ovr, binary_auc, f1, f1_macro, mean_std, predicted_classes,
    ClassAveraging,
};
pub use output::{flat_csv, plot_data};
pub use split::{stratified_split, Split};
