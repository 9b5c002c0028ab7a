//! Evaluation harness: synthetic panels, ingestion, rolling out-of-sample
//! evaluation and the smoothing-dimension sweep.

pub mod eval;
pub mod synthetic;

pub use eval::{
    axis_range_ratio, ingest, run_rolling_evaluation, run_tuning_sweep, weekly_dates, DataBundle, Evaluation,
    HarnessError, RunConfig, SweepRow,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
