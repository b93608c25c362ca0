//! LASSO and maximum correlation on the same noisy measurement, followed by
//! least-squares refinement.

use csfb::feedback::{
    generate_feedback_matrix, transmit, FeedbackConfig, Rounding, SparseFeedbackVector,
};
use csfb::recovery::{
    decompose_real, lasso_solve, ls_refine, maxcorr_support, LassoOptions, RecoveryMethod,
};
use csfb::rng::seeded;
use nalgebra::DVector;

fn main() -> csfb::Result<()> {
    let (n, s) = (100, 4);
    let mut values = DVector::zeros(n);
    for (j, x) in [(3, 2.1), (17, 1.6), (42, 3.4), (88, 1.9)] {
        values[j] = x;
    }
    let truth = SparseFeedbackVector::from_values(values);

    let mut config = FeedbackConfig::analog(n, s, 0.6, 0.2, Rounding::HalfUp);
    config.r = 16;
    let mut rng = seeded(11);
    let matrix = generate_feedback_matrix(&config, n, &mut rng)?;
    let meas = transmit(&matrix, &truth, config.sigma, &mut rng);
    let system = decompose_real(&meas, &matrix)?;

    let lasso = lasso_solve(
        &system.y,
        system.a_hat,
        system.sigma_real,
        config.alpha,
        &LassoOptions::default(),
    )?;
    println!(
        "lasso support {:?} after {} sweeps (gap {:.2e})",
        lasso.support(),
        lasso.sweeps,
        lasso.gap
    );
    let refined = ls_refine(&system, &lasso.support(), RecoveryMethod::Lasso)?;
    println!(
        "  refined {:?}  sigma_e {:.4}",
        refined
            .v_ls
            .iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>(),
        refined.sigma_e
    );

    let mc = maxcorr_support(&system, s);
    let refined = ls_refine(&system, &mc, RecoveryMethod::MaxCorr)?;
    println!("maxcorr support {mc:?}");
    println!(
        "  refined {:?}",
        refined
            .v_ls
            .iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>()
    );
    println!("truth {:?}", truth.support);
    Ok(())
}
