//! Smallest c/2 whose channel count reaches a support-recovery target.

use csfb::channel::SystemParams;
use csfb::harness::{calibrate_c, CalibrationOptions};

fn main() -> csfb::Result<()> {
    let options = CalibrationOptions {
        trials: 2000,
        ..CalibrationOptions::default()
    };
    for (n, s) in [(100, 6), (50, 3)] {
        let params = SystemParams::from_db(n, 4, 10.0)?;
        for target in [0.8, 0.9, 0.95] {
            let c = calibrate_c(&params, s, target, &options)?;
            println!(
                "n={n} s={s} target {target}: c/2={:.2} r={} rate {:.3}{}",
                c.c_half,
                c.r,
                c.success_rate,
                if c.reached { "" } else { " (not reached)" }
            );
        }
    }
    Ok(())
}
