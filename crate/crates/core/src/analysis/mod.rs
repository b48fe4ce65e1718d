//! Cost accounting, trace export and timing.

mod bench;
mod counts;
mod export;

pub use bench::{bench_attention, time_reps, BenchReport, BenchStats, MIN_REPS};
pub use counts::{
    attention_cost, count_comparisons, global_dsta_ratio, random_small_configs, verify_counts, CostModel, CountReport,
};
pub use export::{export_trace, ExportSummary};
