//! Experiment runner: sweeps, seeded parallel trials, calibration, output.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod run;

pub use config::{ExperimentConfig, MatrixChoice, Overrides, Scenario, SnrConvention};
pub use output::{
    csv_string, emit_csv, emit_plot_data, emit_wishart_csv, parse_csv, parse_wishart_csv, PlotAxis,
    ResultRow, WishartRow, CSV_HEADER, WISHART_HEADER,
};
pub use pipeline::{run_trial, PointPlan, Receiver, TrialOutcome};
pub use run::{
    calibrate_c, plan_points, run_experiment, run_point, support_recovery_rate, Calibration,
    CalibrationOptions, ExperimentOutput, PointResult,
};
