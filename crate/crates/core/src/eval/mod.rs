//! Measurement: errors, probes, distribution export and bid selection.

mod export;
mod metrics;
mod probes;
mod select;

pub use export::{export_distribution, Histogram};
pub use metrics::{evaluate, ConstantPredictor, EvalReport, ModelView, OraclePredictor, Predictor, TargetMetrics};
pub use probes::{
    decile_prefixes, probe_monotonicity, probe_predictability, probe_slots, ranks, spearman, Bucket, DecilePoint,
    MonotonicityConfig, MonotonicityReport, PredictabilityReport,
};
pub use select::{argmin_budget_match, select_bid, BidMode, BidSelection, BidState};
