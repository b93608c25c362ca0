//! Optimal SINR back-off for noisy analog feedback, and what it buys.

use csfb::recovery::SuccessBound;
use csfb::throughput::{
    effective_rate_analytic, effective_rate_at, optimal_backoff, throughput_constant,
};

fn main() -> csfb::Result<()> {
    let (n, p, rho, s) = (100, 4, 10.0, 6);
    let beta = throughput_constant(n, p, rho)?;
    println!("beta_t = {beta:.4}");
    println!(
        "{:>8} {:>8} {:>8} {:>10} {:>10}",
        "sigma_e", "delta*", "eta", "R_eff", "R_eff(0)"
    );
    for sigma_e in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let policy = optimal_backoff(beta, sigma_e)?;
        let (best, _) = effective_rate_analytic(n, p, rho, s, sigma_e, SuccessBound::WithSparsity)?;
        let none = effective_rate_at(n, p, rho, s, sigma_e, 0.0, SuccessBound::WithSparsity)?;
        println!(
            "{sigma_e:>8} {:>8.4} {:>8.4} {best:>10.4} {none:>10.4}",
            policy.delta, policy.eta
        );
    }
    Ok(())
}
