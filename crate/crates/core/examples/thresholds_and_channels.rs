//! Feedback thresholds and shared channel counts at the reference system.

use csfb::channel::SystemParams;
use csfb::feedback::{multi_thresholds, required_channels, single_threshold, Rounding};

fn main() -> csfb::Result<()> {
    let params = SystemParams::from_db(100, 4, 10.0)?;
    let n = params.n;

    println!("analog: one threshold, r = (c/2) s ln n");
    for s in 1..=6 {
        let zeta = single_threshold(n, s, &params)?;
        let r = required_channels(n, s, 0.4, Rounding::HalfUp);
        println!("  s={s}  zeta={zeta:.4}  r(c/2=0.4)={r}");
    }

    println!("digital: k thresholds at s=1");
    for k in 1..=4 {
        let t = multi_thresholds(n, 1, k, &params)?;
        let zetas: Vec<String> = t.zetas.iter().map(|z| format!("{z:.3}")).collect();
        println!("  k={k}  [{}]", zetas.join(", "));
    }
    println!(
        "digital r at c/2=2 (rounded up): {}",
        required_channels(n, 1, 2.0, Rounding::Ceil)
    );
    Ok(())
}
