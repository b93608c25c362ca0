//! Error covariance of the refined feedback: closed forms against Monte
//! Carlo for one and two users, and the large-system approximation.

use csfb::wishart::{
    asymptotic_beta, closed_form_s1, closed_form_s2, dedicated_ecm, mc_min_eig_expectation,
    WishartSpec,
};

fn main() -> csfb::Result<()> {
    let rho = 2.0;
    println!("s=1 (real entries, variance 1/2)");
    for r in [1, 2, 5, 10, 20] {
        let mc = mc_min_eig_expectation(&WishartSpec::new(1, r, rho)?, 200_000, 1)?;
        println!(
            "  r={r:>3}  closed {:.5}  mc {:.5} ± {:.5}",
            closed_form_s1(r, rho, 0.5)?,
            mc.mean,
            mc.stderr
        );
    }
    println!("s=2 (complex entries)");
    for r in [2, 5, 10, 20] {
        let mc = mc_min_eig_expectation(&WishartSpec::complex(2, r, rho)?, 200_000, 1)?;
        println!(
            "  r={r:>3}  closed {:.5}  mc {:.5} ± {:.5}",
            closed_form_s2(r, rho)?,
            mc.mean,
            mc.stderr
        );
    }
    println!("s = 2r/5 (aspect ratio 0.2)");
    for r in [10, 25, 50] {
        let spec = WishartSpec::new(2 * r / 5, r, rho)?;
        let mc = mc_min_eig_expectation(&spec, 4096, 1)?;
        println!(
            "  r={r:>3}  asymptotic {:.5}  mc {:.5}",
            asymptotic_beta(r, spec.beta_ar(), rho, 0.5)?,
            mc.mean
        );
    }
    println!(
        "dedicated channel, unit noise: {:.5}",
        dedicated_ecm(1.0, rho)
    );
    Ok(())
}
