//! Uplink training of the feedback channel gains and what imperfect
//! training costs in channel count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{
    check_groups, generate_feedback_matrix, FeedbackConfig, FeedbackMatrix, MatrixKind, Rounding,
};
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub tau: usize,
    pub pilots: DVector<Complex64>,
    pub a_hat: Complex64,
    pub a_tilde_var: f64,
    pub rho_tr: f64,
}

/// LMMSE estimate of a CN(0, 1) gain from `y = √ρ s a + n`:
/// `â = √ρ sᴴy / (1 + ρ‖s‖²)`, error variance `1/(1 + ρ‖s‖²)`.
pub fn lmmse_gain_estimate(
    pilots: &DVector<Complex64>,
    received: &DVector<Complex64>,
    rho_tr: f64,
) -> Result<(Complex64, f64)> {
    let energy = pilots.norm_squared();
    if energy == 0.0 {
        return Err(Error::invalid("pilot sequence has zero energy"));
    }
    if pilots.len() != received.len() {
        return Err(Error::invalid("pilot and received lengths differ"));
    }
    if !(rho_tr > 0.0) {
        return Err(Error::invalid(format!(
            "training SNR {rho_tr} must be positive"
        )));
    }
    let denom = 1.0 + rho_tr * energy;
    let a_hat = pilots.dotc(received) * (rho_tr.sqrt() / denom);
    Ok((a_hat, 1.0 / denom))
}

/// Trains one link holding gain `gain` with `tau` unit pilots.
pub fn train_link<R: Rng + ?Sized>(
    tau: usize,
    rho_tr: f64,
    gain: Complex64,
    rng: &mut R,
) -> Result<TrainingRecord> {
    if tau == 0 {
        return Err(Error::invalid("at least one training symbol is needed"));
    }
    let pilots = DVector::from_element(tau, Complex64::new(1.0, 0.0));
    let received = DVector::from_fn(tau, |i, _| {
        pilots[i] * gain * rho_tr.sqrt() + complex_gaussian(rng)
    });
    let (a_hat, a_tilde_var) = lmmse_gain_estimate(&pilots, &received, rho_tr)?;
    Ok(TrainingRecord {
        tau,
        pilots,
        a_hat,
        a_tilde_var,
        rho_tr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub r_perfect: usize,
    pub r_noisy: usize,
    /// Unrounded `r_noisy / r_perfect`.
    pub penalty_ratio: f64,
    /// SNR at which perfect training needs `r_noisy` channels.
    pub rho_equiv: f64,
}

/// Channels needed to identify `support_size` users among `n` when each
/// channel carries `ln(1 + ρâ²)` nats, and with estimation error `ã²`
/// acting as extra noise. Natural logs throughout.
pub fn channel_budget(
    n: usize,
    support_size: usize,
    rho: f64,
    a_hat_sq: f64,
    a_tilde_sq: f64,
) -> Result<BudgetReport> {
    if support_size >= n {
        return Err(Error::invalid(format!(
            "support size {support_size} must be below n={n}"
        )));
    }
    if !(rho > 0.0 && a_hat_sq > 0.0 && a_tilde_sq >= 0.0) {
        return Err(Error::invalid("need ρ > 0, â² > 0 and ã² ≥ 0"));
    }
    let numerator = ((n - support_size + 1) as f64).ln();
    let rho_equiv = rho / (rho * a_tilde_sq + 1.0);
    let perfect = numerator / (rho * a_hat_sq).ln_1p();
    let noisy = numerator / (rho_equiv * a_hat_sq).ln_1p();
    Ok(BudgetReport {
        r_perfect: ceil_count(perfect),
        r_noisy: ceil_count(noisy),
        penalty_ratio: noisy / perfect,
        rho_equiv,
    })
}

fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockBudget {
    pub channels: usize,
    pub per_group: usize,
    /// Training symbols per user, `n/g`.
    pub training_symbols: usize,
    pub training_saving: f64,
}

/// `g` groups of `n/g` users, each with its own `(c′/2)(s/g) ln(n/g)` channels.
pub fn block_diagonal_budget(
    n: usize,
    s: usize,
    groups: usize,
    c_prime_half: f64,
    rounding: Rounding,
) -> Result<BlockBudget> {
    if groups == 0 {
        return Err(Error::invalid("group count must be at least 1"));
    }
    for (name, v) in [("n", n), ("s", s)] {
        if v % groups != 0 {
            return Err(Error::invalid(format!(
                "{groups} groups need {groups} to divide {name}={v}"
            )));
        }
    }
    let (ng, sg) = (n / groups, s / groups);
    let per_group = crate::feedback::required_channels(ng, sg, c_prime_half, rounding).max(1);
    Ok(BlockBudget {
        channels: per_group * groups,
        per_group,
        training_symbols: ng,
        training_saving: groups as f64,
    })
}

/// Block-diagonal feedback matrix realizing a [`BlockBudget`].
pub fn block_diagonal_matrix<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    budget: &BlockBudget,
    rng: &mut R,
) -> Result<FeedbackMatrix> {
    let groups = budget.channels / budget.per_group;
    check_groups(n, budget.channels, s, groups)?;
    let mut cfg = FeedbackConfig::analog(n, s, 1.0, 0.0, Rounding::HalfUp);
    cfg.r = budget.channels;
    cfg.matrix_kind = MatrixKind::BlockDiagonal { groups };
    generate_feedback_matrix(&cfg, n, rng)
}

/// `r × n` ±1 chip sequences over non-fading channels.
pub fn chip_sequence_matrix<R: Rng + ?Sized>(
    n: usize,
    r: usize,
    rng: &mut R,
) -> Result<FeedbackMatrix> {
    if r == 0 || n == 0 {
        return Err(Error::invalid("chip sequences need r ≥ 1 and n ≥ 1"));
    }
    let chips = DMatrix::from_fn(r, n, |_, _| {
        Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)
    });
    Ok(FeedbackMatrix::from_complex(MatrixKind::Bernoulli, chips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::required_channels;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn single_pilot_unit_snr() {
        let pilots = DVector::from_element(1, Complex64::new(1.0, 0.0));
        let (_, var) = lmmse_gain_estimate(&pilots, &pilots, 1.0).unwrap();
        assert!((var - 0.5).abs() < 1e-15);
        assert!(lmmse_gain_estimate(&DVector::zeros(3), &DVector::zeros(3), 1.0).is_err());
    }

    #[test]
    fn high_snr_estimate_converges() {
        let gain = Complex64::new(0.3, -0.8);
        let rec = train_link(4, 1e10, gain, &mut seeded(1)).unwrap();
        assert!((rec.a_hat - gain).norm() < 1e-4);
        assert!(rec.a_tilde_var < 1e-10);
    }

    #[test]
    fn empirical_mse_matches_analytic_variance() {
        let mut rng = seeded(2);
        let (tau, rho) = (3, 2.0);
        let trials = 100_000;
        let mut mse = 0.0;
        let mut analytic = 0.0;
        for _ in 0..trials {
            let a = complex_gaussian(&mut rng);
            let rec = train_link(tau, rho, a, &mut rng).unwrap();
            mse += (rec.a_hat - a).norm_sqr();
            analytic = rec.a_tilde_var;
        }
        let ratio = mse / trials as f64 / analytic;
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn budget_reference_point() {
        let b = channel_budget(100, 1, 10.0, 1.0, 0.1).unwrap();
        let expected = 11f64.ln() / 6f64.ln();
        assert!((b.penalty_ratio - expected).abs() < 1e-12);
        assert!((b.penalty_ratio - 1.338).abs() < 1e-3);
        assert!(b.r_noisy >= b.r_perfect);

        let exact = channel_budget(100, 1, 10.0, 1.0, 0.0).unwrap();
        assert_eq!(exact.penalty_ratio, 1.0);
        assert_eq!(exact.rho_equiv, 10.0);
        assert_eq!(exact.r_noisy, exact.r_perfect);
    }

    #[test]
    fn block_budget_edges() {
        for s in 1..8 {
            let b = block_diagonal_budget(100, s, 1, 0.4, Rounding::HalfUp).unwrap();
            assert_eq!(
                b.channels,
                required_channels(100, s, 0.4, Rounding::HalfUp).max(1)
            );
        }
        let two = block_diagonal_budget(100, 6, 2, 0.4, Rounding::HalfUp).unwrap();
        assert_eq!(two.training_symbols, 50);
        assert!(block_diagonal_budget(100, 5, 2, 0.4, Rounding::HalfUp).is_err());
        assert!(block_diagonal_budget(99, 6, 2, 0.4, Rounding::HalfUp).is_err());
        let m = block_diagonal_matrix(100, 6, &two, &mut seeded(3)).unwrap();
        assert_eq!(m.r(), two.channels);
    }

    #[test]
    fn chip_sequences() {
        let m = chip_sequence_matrix(200, 400, &mut seeded(4)).unwrap();
        assert!(m.complex.iter().all(|z| z.im == 0.0 && z.re.abs() == 1.0));
        assert!(!m.kind.is_fading());
        // Column means have sd 1/√r = 0.05.
        let worst = m
            .complex
            .column_iter()
            .map(|c| c.iter().map(|z| z.re).sum::<f64>() / 400.0)
            .fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst < 5.0 * 0.05, "{worst}");
    }

    proptest! {
        #[test]
        fn rho_equiv_reproduces_noisy_budget(n in 10usize..500, rho in 0.5f64..50.0, a2 in 0.1f64..3.0, e2 in 0.0f64..1.0) {
            let b = channel_budget(n, 1, rho, a2, e2).unwrap();
            let back = channel_budget(n, 1, b.rho_equiv, a2, 0.0).unwrap();
            let noisy = ((n) as f64).ln() / (b.rho_equiv * a2).ln_1p();
            let perfect_at_equiv = ((n) as f64).ln() / (back.rho_equiv * a2).ln_1p();
            prop_assert!((noisy - perfect_at_equiv).abs() < 1e-9 * noisy);
            prop_assert_eq!(back.r_perfect, b.r_noisy);
            prop_assert!(b.penalty_ratio >= 1.0);
            prop_assert_eq!(b.penalty_ratio == 1.0, e2 == 0.0);
        }

        #[test]
        fn error_variance_decreases(tau in 1usize..20, rho in 0.1f64..20.0) {
            let v = |t: usize, r: f64| {
                let s = DVector::from_element(t, Complex64::new(1.0, 0.0));
                lmmse_gain_estimate(&s, &s, r).unwrap().1
            };
            prop_assert!(v(tau + 1, rho) < v(tau, rho));
            prop_assert!(v(tau, rho * 1.1) < v(tau, rho));
        }
    }
}
