//! Experiment plumbing: configs, synthetic data, batch execution, CSV/SVG output.

pub mod config;
pub mod data;
pub mod experiment;
pub mod output;

pub use config::{ExperimentConfig, MirrorSpec, PlotStyle, ProblemSpec, VerifyFlags};
pub use data::{generate_regression, generate_regression_with, initial_point};
pub use experiment::{
    constants_report, execute, output_root, run_experiment, CheckResult, ConstantsReport,
    Experiment, RunOutcome, Setup, OUT_DIR_ENV,
};
pub use output::{emit_csv, emit_svg, parse_csv, read_csv, render_svg, write_csv, CsvRun, Curve};
