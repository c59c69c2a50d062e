//! Desk-scale experiments on top of `pide-core`: cached test sets, the MAE
//! metric, the multi-seed runner and slice export.

pub mod experiment;
pub mod output;
pub mod presets;
pub mod slice;
pub mod testset;

pub use experiment::{run_experiment, ExperimentConfig, RunOptions, SeedSummary, Summary};
pub use slice::{emit_slice, Axis, AxisSpec, SliceRow};
pub use testset::{build_test_set, load_or_build_test_set, mae, OracleSpec, TestSet, TestSetSpec};
