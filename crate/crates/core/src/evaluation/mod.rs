//! Benchmarks, regret, baselines, predictions and summaries.

pub mod baselines;
pub mod metrics;
pub mod oracle;
pub mod predictions;
pub mod regret;
pub mod report;
pub mod trace;

pub use baselines::{run_baseline, slot_fair_policy, utilitarian_policy, Baseline};
pub use metrics::{dispersion_metrics, Dispersion};
pub use oracle::{
    benchmark_assignment, benchmark_mintb, maximize_multisimplex, MinTbBenchmark, OracleOptions,
    OracleResult,
};
pub use predictions::{make_predictions, PredictionMode};
pub use regret::{
    assignment_theorem_check, fairness_regret, galpha_regret, mintb_theorem_check, TheoremTerms,
};
pub use trace::{AssignmentRecord, AssignmentTrace, MinTbRecord, MinTbTrace, RunTrace};
