//! Thresholds against channels at a fixed feedback budget p·k·r.
//!
//! cargo run --release --example bit_budget_tradeoff [trials]

use csfb::harness::{run_experiment, ExperimentConfig, ExperimentOutput, Scenario};

fn main() -> csfb::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2000);
    let config = ExperimentConfig {
        thresholds: (1..=6).collect(),
        dedicated_noisy: false,
        dedicated_noiseless: false,
        trials,
        ..ExperimentConfig::preset(Scenario::Fig6)
    };
    let ExperimentOutput::Throughput(points) = run_experiment(&config)? else {
        unreachable!()
    };
    for budget in &config.budget_bits {
        println!("budget {budget} bits");
        for p in points.iter().filter(|p| p.budget_bits == Some(*budget)) {
            println!(
                "  k={} r={:>3}  rate {:.3} ± {:.3}",
                p.row.k, p.row.r, p.row.rate_emp, p.row.rate_se
            );
        }
    }
    Ok(())
}
