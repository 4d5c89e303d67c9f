//! Benchmark harness: recovery metrics and multi-trial suites.

pub mod metrics;
pub mod suite;

pub use metrics::{complexity_binning, r_squared, rate_stats, solution_rate, RateStats};
pub use suite::{run_suite, write_results_csv, SuiteReport, SuiteSpec, SuiteSummary, TrialResult};
