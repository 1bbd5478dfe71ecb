//! Benchmark orchestration: configuration, multi-trial runs, persistence,
//! rank tables and the forgetting demonstration.

mod config;
mod demo;
mod export;
mod ranks;
mod report;

pub use config::{BenchmarkConfig, DatasetSource, ScenarioConfig};
pub use demo::{demo_forgetting, demo_forgetting_in, DemoBin, DemoReport, DemoTrial};
pub use export::{
    export_results, load_records, load_report, load_summary, SummaryRow, RECORDS_FILE,
    SUMMARY_COLUMNS, SUMMARY_FILE,
};
pub use ranks::{average_ranks, summarize_ranks, RankTable, RANK_METRICS};
pub use report::{
    run_benchmark, run_benchmark_in, BenchmarkReport, Stat, StrategySummary, TrialRecord,
};
