//! Error covariance of the refined feedback values.
//!
//! With shared channels the worst refined entry has variance at most
//! `σ_v² E[1/(1 + ρ λ_min(A_sᵀA_s))]`; with dedicated channels it is
//! `σ_v²/(1 + ρ)`. This module evaluates that expectation in closed form where
//! one exists and by Monte-Carlo otherwise.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{
    generate_feedback_matrix, FeedbackConfig, FeedbackMatrix, MatrixKind, Rounding,
};
use crate::recovery::{ls_refine, RealSystem, RecoveryMethod};
use crate::rng::{complex_gaussian, gaussian, trial_rng};
use crate::special::{integrate_half_line, regularized_upper_gamma_int, scaled_upper_gamma};

/// Entry law of the `2r × s` block `A_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    /// Real Gaussian entries; the Gram matrix is real Wishart.
    #[default]
    Real,
    /// CN(0, 1) entries; the Gram matrix is complex Wishart.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WishartSpec {
    pub s: usize,
    /// Complex channel count; `A_s` has `2r` rows.
    pub r: usize,
    pub rho_fb: f64,
    /// Variance of each real entry. ½ is the real decomposition of CN(0, 1).
    pub entry_variance: f64,
    pub ensemble: Ensemble,
}

impl WishartSpec {
    pub fn new(s: usize, r: usize, rho_fb: f64) -> Result<Self> {
        let spec = WishartSpec {
            s,
            r,
            rho_fb,
            entry_variance: 0.5,
            ensemble: Ensemble::Real,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn complex(s: usize, r: usize, rho_fb: f64) -> Result<Self> {
        let spec = WishartSpec {
            ensemble: Ensemble::Complex,
            entry_variance: 1.0,
            ..Self::new(s, r, rho_fb)?
        };
        Ok(spec)
    }

    pub fn with_entry_variance(self, entry_variance: f64) -> Self {
        WishartSpec {
            entry_variance,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.r == 0 || 2 * self.r < self.s {
            return Err(Error::invalid(format!(
                "need s ≥ 1 and 2r ≥ s (s={}, r={})",
                self.s, self.r
            )));
        }
        if !(self.rho_fb >= 0.0 && self.rho_fb.is_finite()) {
            return Err(Error::invalid(format!(
                "feedback SNR ρ={} must be finite and ≥ 0",
                self.rho_fb
            )));
        }
        if !(self.entry_variance > 0.0) {
            return Err(Error::invalid("entry variance must be positive"));
        }
        Ok(())
    }

    /// Aspect ratio `s / 2r`.
    pub fn beta_ar(&self) -> f64 {
        self.s as f64 / (2 * self.r) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

fn min_eigenvalue_real(a: &DMatrix<f64>) -> f64 {
    let gram = a.tr_mul(a);
    match gram.nrows() {
        1 => gram[(0, 0)],
        2 => {
            let (p, q, d) = (gram[(0, 0)], gram[(1, 1)], gram[(0, 1)]);
            0.5 * (p + q) - (0.25 * (p - q).powi(2) + d * d).sqrt()
        }
        _ => gram.symmetric_eigenvalues().min(),
    }
}

fn draw_min_eigenvalue<R: Rng + ?Sized>(spec: &WishartSpec, rng: &mut R) -> f64 {
    let (rows, s) = (2 * spec.r, spec.s);
    match spec.ensemble {
        Ensemble::Real => {
            let sd = spec.entry_variance.sqrt();
            min_eigenvalue_real(&DMatrix::from_fn(rows, s, |_, _| sd * gaussian(rng)))
        }
        Ensemble::Complex => {
            let sd = spec.entry_variance.sqrt();
            let a = DMatrix::from_fn(rows, s, |_, _| complex_gaussian(rng) * sd);
            let gram = a.ad_mul(&a);
            if s == 1 {
                return gram[(0, 0)].re;
            }
            if s == 2 {
                let (p, q, d) = (gram[(0, 0)].re, gram[(1, 1)].re, gram[(0, 1)].norm_sqr());
                return 0.5 * (p + q) - (0.25 * (p - q).powi(2) + d).sqrt();
            }
            // [[Re, −Im], [Im, Re]] carries each Hermitian eigenvalue twice.
            let embed = DMatrix::from_fn(2 * s, 2 * s, |i, j| {
                let z = gram[(i % s, j % s)];
                match (i < s, j < s) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
            });
            embed.symmetric_eigenvalues().min()
        }
    }
}

const CHUNK: usize = 4096;

/// Monte-Carlo `E[1/(1 + ρ λ_min)]` with its standard error.
///
/// Trials are processed in fixed chunks, each with its own stream, and
/// summed in chunk order, so the estimate does not depend on thread count.
pub fn mc_min_eig_expectation(spec: &WishartSpec, trials: usize, seed: u64) -> Result<McEstimate> {
    spec.validate()?;
    if trials < 1000 {
        return Err(Error::invalid(format!(
            "trials={trials}: use at least 1000"
        )));
    }
    let chunks = trials.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trial_rng(seed, 0x5749_5348, c as u64);
            let count = CHUNK.min(trials - c * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let x = 1.0 / (1.0 + spec.rho_fb * draw_min_eigenvalue(spec, &mut rng));
                sum += x;
                sum_sq += x * x;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        trials,
    })
}

/// Single feedback user: `λ = ‖a‖²` is Gamma distributed and
/// `E[1/(1 + ρλ)] = x^r eˣ Γ(1 − r, x)` with `x = 1/(2vρ)`.
///
/// Unit entry variance gives the expression with the undefined symbol in its
/// incomplete-gamma argument read as `ρ`.
pub fn closed_form_s1(r: usize, rho_fb: f64, entry_variance: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("r must be at least 1"));
    }
    if !(rho_fb >= 0.0) || !(entry_variance > 0.0) {
        return Err(Error::invalid(
            "ρ must be ≥ 0 and the entry variance positive",
        ));
    }
    if rho_fb == 0.0 {
        return Ok(1.0);
    }
    let x = 1.0 / (2.0 * entry_variance * rho_fb);
    // x^r eˣ Γ(1−r, x) = x · [x^{r−1} eˣ Γ(1−r, x)], the bracket being the
    // scaled continued fraction, which stays O(1/x) for any r.
    Ok(x * scaled_upper_gamma(1.0 - r as f64, x))
}

/// Density of `λ_min` for the `2r × 2` complex CN(0, 1) Wishart, `m = 2r`:
/// `λ^{m−2}e^{−λ}/(m−2)! · [m Q(m+1, λ) − 2λ Q(m, λ) + λ² Q(m−1, λ)/(m−1)]`.
pub fn s2_min_eig_density(r: usize, lambda: f64) -> f64 {
    let m = 2 * r as u32;
    if lambda <= 0.0 {
        return if m == 2 { 2.0 } else { 0.0 };
    }
    let ln_w = (m - 2) as f64 * lambda.ln() - lambda - libm::lgamma((m - 1) as f64);
    let bracket = m as f64 * regularized_upper_gamma_int(m + 1, lambda)
        - 2.0 * lambda * regularized_upper_gamma_int(m, lambda)
        + lambda * lambda * regularized_upper_gamma_int(m - 1, lambda) / (m - 1) as f64;
    ln_w.exp() * bracket
}

/// Two feedback users. The three-integral expression is used with
/// `e^{λ}` read as `e^{−λ}` and the first gamma read as `Γ(2r+1, λ)`; it then
/// describes a `2r × 2` complex Wishart.
pub fn closed_form_s2(r: usize, rho_fb: f64) -> Result<f64> {
    if r < 2 {
        return Err(Error::invalid("the two-user form needs r ≥ 2"));
    }
    if !(rho_fb >= 0.0) {
        return Err(Error::invalid("ρ must be ≥ 0"));
    }
    Ok(integrate_half_line(
        |l| s2_min_eig_density(r, l) / (1.0 + rho_fb * l),
        1e-11,
    ))
}

/// The literal two-user expression. Its first integrand grows like
/// `e^{λ}`; the truncated integral is tracked as the cutoff grows and
/// reported as divergent once it blows up.
pub fn closed_form_s2_literal(r: usize, rho_fb: f64) -> Result<f64> {
    if r < 2 {
        return Err(Error::invalid("the two-user form needs r ≥ 2"));
    }
    let m = 2 * r;
    let ln_norm = libm::lgamma(m as f64) + libm::lgamma((m - 1) as f64);
    let ln_full = libm::lgamma((m + 1) as f64);
    let first = |l: f64| {
        if l <= 0.0 {
            return 0.0;
        }
        ((m - 2) as f64 * l.ln() + l + ln_full - ln_norm).exp() / (1.0 + rho_fb * l)
    };
    let mut previous = crate::special::integrate(first, 0.0, 25.0, 1e-10);
    for cutoff in [50.0, 100.0, 200.0, 400.0] {
        let current = crate::special::integrate(first, 0.0, cutoff, 1e-10);
        if !current.is_finite() || current > 2.0 * previous.max(1e-300) {
            return Err(Error::Divergent(format!(
                "first integral reaches {current:.3e} at λ ≤ {cutoff} (was {previous:.3e}); e^λ growth"
            )));
        }
        previous = current;
    }
    let rest = integrate_half_line(
        |l| {
            let w = ((m - 2) as f64 * l.ln() - l - libm::lgamma((m - 1) as f64)).exp();
            w * (-2.0 * l * regularized_upper_gamma_int(m as u32, l)
                + l * l * regularized_upper_gamma_int(m as u32 - 1, l) / (m - 1) as f64)
                / (1.0 + rho_fb * l)
        },
        1e-10,
    );
    Ok(previous + rest)
}

/// Large-system value `1/(1 + ρ · 2r v (1 − √β)²)`, `β = s/2r`.
///
/// `v = 1` gives the literal expression.
pub fn asymptotic_beta(r: usize, beta_ar: f64, rho_fb: f64, entry_variance: f64) -> Result<f64> {
    if !(beta_ar > 0.0 && beta_ar < 1.0) {
        return Err(Error::invalid(format!(
            "aspect ratio β={beta_ar} must lie in (0, 1)"
        )));
    }
    let edge = 2.0 * r as f64 * entry_variance * (1.0 - beta_ar.sqrt()).powi(2);
    Ok(1.0 / (1.0 + rho_fb * edge))
}

/// Dedicated channels: `σ_v²/(1 + ρ)`.
pub fn dedicated_ecm(sigma_v: f64, rho_fb: f64) -> f64 {
    sigma_v * sigma_v / (1.0 + rho_fb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmReport {
    /// `σ_v² E[1/(1 + ρλ_min)]`, closed form when `s = 1`.
    pub shared_bound: f64,
    pub dedicated_value: f64,
    pub mc: McEstimate,
}

pub fn ecm_report(spec: &WishartSpec, sigma_v: f64, trials: usize, seed: u64) -> Result<EcmReport> {
    let mc = mc_min_eig_expectation(spec, trials, seed)?;
    let expectation = match (spec.s, spec.ensemble) {
        (1, Ensemble::Real) => closed_form_s1(spec.r, spec.rho_fb, spec.entry_variance)?,
        (2, Ensemble::Complex) if spec.r >= 2 && spec.entry_variance == 1.0 => {
            closed_form_s2(spec.r, spec.rho_fb)?
        }
        _ => mc.mean,
    };
    Ok(EcmReport {
        shared_bound: sigma_v * sigma_v * expectation,
        dedicated_value: dedicated_ecm(sigma_v, spec.rho_fb),
        mc,
    })
}

/// Mean refined-noise scale `σ_e` on a fixed support of `s` users.
///
/// Shared mode draws a fresh `r × n` Gaussian matrix per trial; dedicated mode
/// uses the identity.
pub fn mean_refined_noise_scale(
    n: usize,
    r: usize,
    s: usize,
    sigma: f64,
    dedicated: bool,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let support: Vec<usize> = (0..s).collect();
    let mut cfg = FeedbackConfig::analog(n, s, 1.0, sigma, Rounding::HalfUp);
    cfg.r = r;
    cfg.matrix_kind = MatrixKind::Gaussian;
    let identity = FeedbackMatrix::identity(n);
    let total: Result<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, r as u64, t as u64);
            let owned;
            let matrix = if dedicated {
                &identity
            } else {
                owned = generate_feedback_matrix(&cfg, n, &mut rng)?;
                &owned
            };
            let system = RealSystem {
                y: nalgebra::DVector::zeros(matrix.hat.nrows()),
                a_hat: &matrix.hat,
                scale: matrix.column_scale,
                sigma_real: sigma / std::f64::consts::SQRT_2,
            };
            Ok(ls_refine(&system, &support, RecoveryMethod::Lasso)?.sigma_e)
        })
        .collect();
    Ok(total?.iter().sum::<f64>() / trials as f64)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::exp_integral_e1;

    /// Gamma(r, 2v) density quadrature: an oracle independent of the
    /// continued fraction.
    fn s1_quadrature(r: usize, rho: f64, v: f64) -> f64 {
        let theta = 2.0 * v;
        let ln_norm = libm::lgamma(r as f64) + r as f64 * theta.ln();
        integrate_half_line(
            |l| {
                if l <= 0.0 {
                    return if r == 1 { 1.0 / theta } else { 0.0 };
                }
                ((r as f64 - 1.0) * l.ln() - l / theta - ln_norm).exp() / (1.0 + rho * l)
            },
            1e-12,
        )
    }

    #[test]
    fn s1_matches_exponential_integral_at_r1() {
        let v = closed_form_s1(1, 1.0, 0.5).unwrap();
        let expected = std::f64::consts::E * exp_integral_e1(1.0);
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.5963).abs() < 1e-4);
    }

    #[test]
    fn s1_matches_quadrature() {
        for &r in &[1usize, 2, 5, 10, 40] {
            for &(rho, var) in &[(1.0, 0.5), (10.0, 0.5), (2.0, 1.0), (0.01, 0.5)] {
                let cf = closed_form_s1(r, rho, var).unwrap();
                let q = s1_quadrature(r, rho, var);
                assert!(
                    (cf - q).abs() < 1e-9 * q.max(1e-3),
                    "r={r} ρ={rho}: {cf} vs {q}"
                );
            }
        }
    }

    #[test]
    fn s1_limits() {
        assert!(closed_form_s1(5, 1e8, 0.5).unwrap() < 1e-7);
        assert!((closed_form_s1(5, 1e-8, 0.5).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(closed_form_s1(5, 0.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn s2_density_integrates_to_one_and_is_nonnegative() {
        for &r in &[2usize, 3, 6, 10] {
            let mass = integrate_half_line(|l| s2_min_eig_density(r, l), 1e-11);
            assert!((mass - 1.0).abs() < 1e-8, "r={r}: {mass}");
            for i in 0..400 {
                assert!(s2_min_eig_density(r, i as f64 * 0.1) >= -1e-15);
            }
        }
    }

    #[test]
    fn s2_decreasing_in_rho() {
        let mut last = 1.0 + 1e-12;
        for i in 0..30 {
            let v = closed_form_s2(4, 0.1 * 1.3f64.powi(i)).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!((closed_form_s2(4, 0.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn s2_literal_reports_divergence() {
        assert!(matches!(
            closed_form_s2_literal(3, 1.0),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn s1_mc_agrees_with_closed_form() {
        for &r in &[2usize, 5] {
            let spec = WishartSpec::new(1, r, 1.0).unwrap();
            let mc = mc_min_eig_expectation(&spec, 100_000, 1).unwrap();
            let cf = closed_form_s1(r, 1.0, 0.5).unwrap();
            assert!(
                (mc.mean - cf).abs() < 3.0 * mc.stderr,
                "r={r}: {} ± {} vs {cf}",
                mc.mean,
                mc.stderr
            );
        }
    }

    #[test]
    fn s2_mc_agrees_with_closed_form() {
        let spec = WishartSpec::complex(2, 3, 1.0).unwrap();
        let mc = mc_min_eig_expectation(&spec, 100_000, 2).unwrap();
        let cf = closed_form_s2(3, 1.0).unwrap();
        assert!(
            (mc.mean - cf).abs() < 3.0 * mc.stderr,
            "{} ± {} vs {cf}",
            mc.mean,
            mc.stderr
        );
    }

    #[test]
    fn mc_is_thread_count_independent_and_bounded() {
        let spec = WishartSpec::new(3, 4, 2.0).unwrap();
        let a = mc_min_eig_expectation(&spec, 5000, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| mc_min_eig_expectation(&spec, 5000, 9).unwrap());
        assert_eq!(a, b);
        assert!(a.mean > 0.0 && a.mean < 1.0);
        let tiny = WishartSpec::new(3, 4, 1e-9).unwrap();
        assert!((mc_min_eig_expectation(&tiny, 1000, 1).unwrap().mean - 1.0).abs() < 1e-6);
        assert!(mc_min_eig_expectation(&spec, 10, 1).is_err());
    }

    #[test]
    fn asymptotic_reference_values() {
        assert!((asymptotic_beta(50, 0.25, 1.0, 1.0).unwrap() - 1.0 / 26.0).abs() < 1e-12);
        // 1/(1 + 200·(1 − √0.2)²) = 1/62.11.
        let v = asymptotic_beta(50, 0.2, 2.0, 1.0).unwrap();
        assert!((v - 0.016099).abs() < 1e-6, "{v}");
        let small = asymptotic_beta(50, 1e-12, 2.0, 1.0).unwrap();
        assert!((small - 1.0 / 201.0).abs() < 1e-6);
        assert!(asymptotic_beta(50, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn dedicated_values_and_fig1_ordering() {
        assert_eq!(dedicated_ecm(1.0, 0.0), 1.0);
        assert!((dedicated_ecm(1.0, 9.0) - 0.1).abs() < 1e-15);
        for r in 4..=20 {
            assert!(closed_form_s1(r, 10.0, 0.5).unwrap() < dedicated_ecm(1.0, 10.0));
        }
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [8.0, 16.0, 32.0, 64.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }
}
