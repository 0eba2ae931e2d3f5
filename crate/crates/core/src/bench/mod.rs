//! Multi-seed benchmarking, the reference oracle, and report formatting.

pub mod oracle;
pub mod report;
pub mod runner;

pub use oracle::{oracle_classify, Oracle, OracleMatch, SparseSpectrum};
pub use report::{format_report, parse_runs_csv, parse_summary_csv, runs_csv, Aggregate, ReportHeader, ReportStyle, RunReport, RunRow};
pub use runner::{run_benchmark, sha256_file, BenchOptions, Manifest};
