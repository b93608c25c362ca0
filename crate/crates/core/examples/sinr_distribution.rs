//! Simulated per-beam SINR against the closed-form CCDF.
//!
//! cargo run --release --example sinr_distribution

use csfb::channel::{compute_sinr, generate_downlink, sinr_ccdf, SystemParams};
use csfb::rng::seeded;

fn main() -> csfb::Result<()> {
    let params = SystemParams::from_db(100, 4, 10.0)?;
    let mut rng = seeded(1);
    let blocks = 500;
    let mut samples = Vec::with_capacity(blocks * params.n * params.p);
    for _ in 0..blocks {
        let table = compute_sinr(&generate_downlink(&params, &mut rng), &params);
        samples.extend(table.sinr.iter().copied());
    }
    println!("{:>6} {:>10} {:>10}", "zeta", "empirical", "analytic");
    for zeta in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let tail = samples.iter().filter(|&&x| x > zeta).count() as f64 / samples.len() as f64;
        println!("{zeta:>6} {tail:>10.5} {:>10.5}", sinr_ccdf(zeta, &params)?);
    }
    Ok(())
}
