//! Scheduling, SINR back-off, and the closed-form throughput expressions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{cdf_unchecked, SinrTable, SystemParams};
use crate::error::{Error, Result};
use crate::feedback::ThresholdSet;
use crate::recovery::{recovery_success_probability, RecoveryResult, SuccessBound};
use crate::special::{normal_pdf, q_function};

/// `β = 1 + ρ ln n − ρ(p−2) ln ln n`.
pub fn throughput_constant(n: usize, p: usize, rho: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid(format!("n={n}: ln ln n needs n ≥ 3")));
    }
    let ln_n = (n as f64).ln();
    Ok(1.0 + rho * ln_n - rho * (p as f64 - 2.0) * ln_n.ln())
}

/// Extreme-value sum rate `p log₂ β`.
pub fn extreme_value_rate(n: usize, p: usize, rho: f64) -> Result<f64> {
    Ok(p as f64 * throughput_constant(n, p, rho)?.log2())
}

/// Probability that at least one of `n` users lands above a threshold
/// crossed with probability `fraction` each: `1 − (1 − fraction)^n`.
pub fn prob_some_above(n: usize, fraction: f64) -> f64 {
    1.0 - (1.0 - fraction.clamp(0.0, 1.0)).powi(n as i32)
}

fn check_sparsity(n: usize, s: usize) -> Result<()> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!(
            "sparsity s={s} must lie in [1, n={n}]"
        )));
    }
    Ok(())
}

/// `R_a = R · P(A) · P(B)`.
pub fn analog_rate_analytic(
    n: usize,
    p: usize,
    rho: f64,
    s: usize,
    bound: SuccessBound,
) -> Result<f64> {
    check_sparsity(n, s)?;
    let p_a = recovery_success_probability(n, s, bound);
    let p_b = prob_some_above(n, s as f64 / n as f64);
    Ok(extreme_value_rate(n, p, rho)? * p_a * p_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffPolicy {
    pub delta: f64,
    pub sigma_e: f64,
    pub beta_t: f64,
    /// `1 − Q(Δ/σ_e)`.
    pub eta: f64,
}

impl BackoffPolicy {
    pub fn none(beta_t: f64) -> Self {
        BackoffPolicy {
            delta: 0.0,
            sigma_e: 0.0,
            beta_t,
            eta: 1.0,
        }
    }
}

/// Back-off efficiency `1 − Q(Δ/σ)`.
pub fn backoff_efficiency(delta: f64, sigma_e: f64) -> f64 {
    if sigma_e == 0.0 {
        return 1.0;
    }
    1.0 - q_function(delta / sigma_e)
}

fn stationarity(delta: f64, beta_t: f64, sigma_e: f64) -> f64 {
    let z = delta / sigma_e;
    let gap = beta_t - delta;
    q_function(z) + gap / sigma_e * normal_pdf(z) * gap.ln() - 1.0
}

/// Back-off maximizing `(1 − Q(Δ/σ_e)) log₂(β − Δ)`, from its stationarity
/// condition solved by bisection on `[0, β − 1]`.
pub fn optimal_backoff(beta_t: f64, sigma_e: f64) -> Result<BackoffPolicy> {
    if !(beta_t > 1.0) {
        return Err(Error::invalid(format!(
            "throughput constant β={beta_t} must exceed 1"
        )));
    }
    if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma_e={sigma_e} must be finite and ≥ 0"
        )));
    }
    if sigma_e == 0.0 {
        return Ok(BackoffPolicy::none(beta_t));
    }
    let (mut lo, mut hi) = (0.0, beta_t - 1.0);
    let (g_lo, g_hi) = (
        stationarity(lo, beta_t, sigma_e),
        stationarity(hi, beta_t, sigma_e),
    );
    let delta = if g_lo <= 0.0 {
        log::debug!("back-off stationarity has no root (g(0)={g_lo:.3e}); using Δ=0");
        0.0
    } else if g_hi >= 0.0 {
        log::debug!("back-off stationarity has no root (g(β−1)={g_hi:.3e}); using Δ=β−1");
        hi
    } else {
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if stationarity(mid, beta_t, sigma_e) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(BackoffPolicy {
        delta,
        sigma_e,
        beta_t,
        eta: backoff_efficiency(delta, sigma_e),
    })
}

/// `R_eff` at an arbitrary back-off `delta`.
pub fn effective_rate_at(
    n: usize,
    p: usize,
    rho: f64,
    s: usize,
    sigma_e: f64,
    delta: f64,
    bound: SuccessBound,
) -> Result<f64> {
    check_sparsity(n, s)?;
    let beta_t = throughput_constant(n, p, rho)?;
    if beta_t - delta <= 1.0 {
        log::debug!("β − Δ = {} leaves no rate", beta_t - delta);
        return Ok(0.0);
    }
    let p_a = recovery_success_probability(n, s, bound);
    let p_b = prob_some_above(n, s as f64 / n as f64);
    Ok(p as f64 * p_a * p_b * backoff_efficiency(delta, sigma_e) * (beta_t - delta).log2())
}

/// `R_eff` at the optimal back-off, together with that back-off.
pub fn effective_rate_analytic(
    n: usize,
    p: usize,
    rho: f64,
    s: usize,
    sigma_e: f64,
    bound: SuccessBound,
) -> Result<(f64, BackoffPolicy)> {
    let policy = optimal_backoff(throughput_constant(n, p, rho)?, sigma_e)?;
    Ok((
        effective_rate_at(n, p, rho, s, sigma_e, policy.delta, bound)?,
        policy,
    ))
}

/// Expected `log₂(1 + ζ)` of the winning interval on one beam:
/// `Σᵢ log₂(1+ζᵢ) (F(ζᵢ₊₁)ⁿ − F(ζᵢ)ⁿ)`.
pub fn digital_selection_expectation(thresholds: &ThresholdSet, params: &SystemParams) -> f64 {
    let n = params.n as i32;
    thresholds
        .intervals()
        .map(|(lo, hi)| {
            (1.0 + lo).log2()
                * (cdf_unchecked(hi, params).powi(n) - cdf_unchecked(lo, params).powi(n))
        })
        .sum()
}

/// Digital throughput `p · P(A) · E[selection]`.
pub fn digital_rate_analytic(
    params: &SystemParams,
    s: usize,
    thresholds: &ThresholdSet,
    bound: SuccessBound,
) -> Result<f64> {
    check_sparsity(params.n, s * thresholds.k())?;
    let p_a = recovery_success_probability(params.n, s, bound);
    Ok(params.p as f64 * p_a * digital_selection_expectation(thresholds, params))
}

/// The literal digital throughput expression, which carries an
/// extra `1/n` and a second `P(B)` factor.
pub fn digital_rate_literal(
    params: &SystemParams,
    s: usize,
    thresholds: &ThresholdSet,
    bound: SuccessBound,
) -> Result<f64> {
    let n = params.n;
    let k = thresholds.k();
    check_sparsity(n, s * k)?;
    let p_b = prob_some_above(n, (s * k) as f64 / n as f64);
    let p_a = recovery_success_probability(n, s, bound);
    Ok(params.p as f64 * p_b * p_a * digital_selection_expectation(thresholds, params) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThroughputRecord {
    pub empirical_rate: f64,
    pub empirical_se: f64,
    pub analytic_r: f64,
    pub analytic_ra: f64,
    pub analytic_reff: f64,
    pub analytic_rd: f64,
    pub analytic_rd_literal: f64,
    pub p_a: f64,
    pub p_b: f64,
}

/// Scores one analog trial.
///
/// On each beam the user with the largest refined value is scheduled at the
/// backed-off rate `log₂(1 + v − Δ)`, with `deltas[beam]` the beam's back-off.
/// The slot is lost when that exceeds what the user's actual SINR supports.
pub fn score_analog(recoveries: &[RecoveryResult], table: &SinrTable, deltas: &[f64]) -> f64 {
    recoveries
        .iter()
        .zip(deltas)
        .enumerate()
        .map(|(beam, (rec, delta))| match rec.strongest() {
            Some((user, value)) => {
                let committed = value - delta;
                if committed > 0.0 && committed <= table.get(user, beam) {
                    committed.log2_1p()
                } else {
                    0.0
                }
            }
            None => 0.0,
        })
        .sum()
}

/// Scores one digital trial. `recoveries[beam][i]` is the detected set for
/// interval `i`. Each beam serves a uniformly chosen member of its highest
/// occupied interval at rate `log₂(1 + ζᵢ)`, or nothing if that user's SINR
/// falls below `ζᵢ`.
pub fn score_digital<R: Rng + ?Sized>(
    recoveries: &[Vec<RecoveryResult>],
    table: &SinrTable,
    thresholds: &ThresholdSet,
    rng: &mut R,
) -> f64 {
    let mut total = 0.0;
    for (beam, per_interval) in recoveries.iter().enumerate() {
        let Some((i, rec)) = per_interval
            .iter()
            .enumerate()
            .rev()
            .find(|(_, r)| !r.support_hat.is_empty())
        else {
            continue;
        };
        let user = rec.support_hat[rng.random_range(0..rec.support_hat.len())];
        let zeta = thresholds.zetas[i];
        if table.get(user, beam) >= zeta {
            total += zeta.log2_1p();
        }
    }
    total
}

/// Perfect analog feedback: each beam serves its strongest user above `zeta`.
pub fn ideal_analog_rate(table: &SinrTable, zeta: f64) -> f64 {
    (0..table.p())
        .filter_map(|m| table.best_on_beam(m))
        .filter(|&(_, x)| x > zeta)
        .map(|(_, x)| x.log2_1p())
        .sum()
}

/// Perfect digital feedback: each beam earns `log₂(1 + ζᵢ)` for the interval
/// holding its strongest user.
pub fn ideal_digital_rate(table: &SinrTable, thresholds: &ThresholdSet) -> f64 {
    (0..table.p())
        .filter_map(|m| table.best_on_beam(m))
        .filter_map(|(_, x)| thresholds.zetas.iter().rev().find(|&&z| x >= z))
        .map(|z| z.log2_1p())
        .sum()
}

trait Log2OnePlus {
    fn log2_1p(self) -> f64;
}

impl Log2OnePlus for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() / std::f64::consts::LN_2
    }
}
