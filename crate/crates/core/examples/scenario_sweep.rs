//! A small sweep through the harness, written as CSV and gnuplot blocks.
//!
//! cargo run --release --example scenario_sweep -- out.csv out.dat

use std::path::PathBuf;

use csfb::harness::{
    emit_csv, emit_plot_data, run_experiment, ExperimentConfig, ExperimentOutput, PlotAxis,
    Scenario,
};

fn main() -> csfb::Result<()> {
    let mut args = std::env::args().skip(1);
    let csv = PathBuf::from(args.next().unwrap_or_else(|| "sweep.csv".into()));
    let plot = PathBuf::from(args.next().unwrap_or_else(|| "sweep.dat".into()));
    let config = ExperimentConfig {
        sparsity: vec![3, 6],
        c_half: vec![0.2, 0.4, 0.8, 1.2],
        trials: 500,
        ..ExperimentConfig::preset(Scenario::Fig2)
    };
    let ExperimentOutput::Throughput(points) = run_experiment(&config)? else {
        unreachable!()
    };
    let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();
    emit_csv(&rows, &csv)?;
    emit_plot_data(&points, PlotAxis::CHalf, &plot)?;
    for row in &rows {
        println!(
            "{:<20} s={} r={:>3} rate {:.3}",
            row.recovery, row.s, row.r, row.rate_emp
        );
    }
    println!("wrote {} and {}", csv.display(), plot.display());
    Ok(())
}
