//! Shared multi-access feedback channel `y = A v + w`.
//!
//! Strong users (CQI above a threshold) transmit the same value on all `r`
//! shared channels; everyone else stays silent, so `v` is sparse. This module
//! builds the thresholds, the channel matrix `A`, the sparse feedback vector,
//! and the noisy measurement.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ccdf_unchecked, sinr_ccdf_inverse, SinrTable, SystemParams};
use crate::error::{Error, Result};
use crate::rng::complex_gaussian;
use crate::special::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    Analog,
    Digital,
}

impl FeedbackMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackMode::Analog => "analog",
            FeedbackMode::Digital => "digital",
        }
    }
}

/// How the feedback channel gains are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    /// i.i.d. CN(0, 1) fading gains.
    Gaussian,
    /// i.i.d. ±1 chip sequences over non-fading channels.
    Bernoulli,
    /// `groups` independent CN(0, 1) diagonal blocks.
    BlockDiagonal { groups: usize },
    /// One dedicated channel per user (`r = n`, `A = I`).
    Identity,
}

impl MatrixKind {
    pub fn is_fading(&self) -> bool {
        !matches!(self, MatrixKind::Bernoulli | MatrixKind::Identity)
    }
}

/// Rounding rule for `r = (c/2)·s·ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfUp,
    Ceil,
}

impl Rounding {
    pub fn apply(&self, x: f64) -> usize {
        let v = match self {
            Rounding::HalfUp => (x + 0.5).floor(),
            // Guard against 10.000000000000002 style residue.
            Rounding::Ceil => (x - 1e-9).ceil(),
        };
        v.max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Shared feedback channel count.
    pub r: usize,
    /// Target sparsity per beam (per interval in digital mode).
    pub s: usize,
    /// Threshold count; 1 in analog mode.
    pub k: usize,
    /// The constant `c/2` in `r = (c/2)·s·ln n`.
    pub c_half: f64,
    /// Standard deviation of the complex feedback noise.
    pub sigma: f64,
    /// LASSO weight; `2√(2 ln n)` by default.
    pub alpha: f64,
    pub mode: FeedbackMode,
    pub matrix_kind: MatrixKind,
}

impl FeedbackConfig {
    /// Analog configuration with `r` derived from `c/2`, `s` and `n`.
    pub fn analog(n: usize, s: usize, c_half: f64, sigma: f64, rounding: Rounding) -> Self {
        FeedbackConfig {
            r: required_channels(n, s, c_half, rounding).max(1),
            s,
            k: 1,
            c_half,
            sigma,
            alpha: default_alpha(n),
            mode: FeedbackMode::Analog,
            matrix_kind: MatrixKind::Gaussian,
        }
    }

    pub fn digital(
        n: usize,
        s: usize,
        k: usize,
        c_half: f64,
        sigma: f64,
        rounding: Rounding,
    ) -> Self {
        FeedbackConfig {
            k,
            mode: FeedbackMode::Digital,
            ..Self::analog(n, s, c_half, sigma, rounding)
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("channel count r must be at least 1"));
        }
        if self.s == 0 {
            return Err(Error::invalid("sparsity s must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("threshold count k must be at least 1"));
        }
        if self.mode == FeedbackMode::Analog && self.k != 1 {
            return Err(Error::invalid(
                "analog mode uses a single threshold (k = 1)",
            ));
        }
        if self.s * self.k > n {
            return Err(Error::invalid(format!(
                "s·k = {} exceeds the user count {n}",
                self.s * self.k
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sigma={} must be ≥ 0",
                self.sigma
            )));
        }
        if let MatrixKind::BlockDiagonal { groups } = self.matrix_kind {
            check_groups(n, self.r, self.s, groups)?;
        }
        Ok(())
    }
}

pub(crate) fn check_groups(n: usize, r: usize, s: usize, groups: usize) -> Result<()> {
    if groups == 0 {
        return Err(Error::invalid("group count must be at least 1"));
    }
    for (name, value) in [("n", n), ("r", r), ("s", s)] {
        if value % groups != 0 {
            return Err(Error::invalid(format!(
                "block-diagonal mode needs {groups} to divide {name}={value}"
            )));
        }
    }
    Ok(())
}

/// `α = 2√(2 ln n)`.
pub fn default_alpha(n: usize) -> f64 {
    2.0 * (2.0 * (n as f64).ln()).sqrt()
}

/// Shared channels needed for sparsity `s` among `n` users: `(c/2)·s·ln n`.
pub fn required_channels(n: usize, s: usize, c_half: f64, rounding: Rounding) -> usize {
    if n < 2 {
        return 0;
    }
    rounding.apply(c_half * s as f64 * (n as f64).ln())
}

/// Threshold producing an expected `s` strong users: `ζ = F̄⁻¹(s/n)`.
pub fn single_threshold(n: usize, s: usize, params: &SystemParams) -> Result<f64> {
    if s == 0 || s > n {
        return Err(Error::invalid(format!(
            "sparsity s={s} must lie in [1, n={n}]"
        )));
    }
    sinr_ccdf_inverse(s as f64 / n as f64, params)
}

/// Ascending thresholds `ζ_1 < … < ζ_k` with `ζ_{k+1} = ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    pub zetas: Vec<f64>,
}

impl ThresholdSet {
    pub fn k(&self) -> usize {
        self.zetas.len()
    }

    /// Interval `Q_i = [ζ_i, ζ_{i+1})`, zero-based.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let lo = self.zetas[i];
        let hi = self.zetas.get(i + 1).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.k()).map(|i| self.interval(i))
    }
}

/// `ζ_i = F̄⁻¹(s(k−i+1)/n)` for `i = 1..k`.
pub fn multi_thresholds(
    n: usize,
    s: usize,
    k: usize,
    params: &SystemParams,
) -> Result<ThresholdSet> {
    if k == 0 {
        return Err(Error::invalid("threshold count k must be at least 1"));
    }
    if s == 0 || s * k > n {
        return Err(Error::invalid(format!(
            "s·k = {} must lie in [1, n={n}]",
            s * k
        )));
    }
    let zetas = (1..=k)
        .map(|i| sinr_ccdf_inverse((s * (k - i + 1)) as f64 / n as f64, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdSet { zetas })
}

/// Feedback channel gains in complex, real-stacked, and column-normalized form.
#[derive(Debug, Clone)]
pub struct FeedbackMatrix {
    pub kind: MatrixKind,
    /// `r × n` complex gains.
    pub complex: DMatrix<Complex64>,
    /// `2r × n`, `[Re(A); Im(A)]`.
    pub real: DMatrix<f64>,
    /// `real · column_scale`, with unit expected squared column norm.
    pub hat: DMatrix<f64>,
    pub column_scale: f64,
}

impl FeedbackMatrix {
    pub fn from_complex(kind: MatrixKind, complex: DMatrix<Complex64>) -> Self {
        let (r, n) = complex.shape();
        let real = DMatrix::from_fn(2 * r, n, |i, j| {
            if i < r {
                complex[(i, j)].re
            } else {
                complex[(i - r, j)].im
            }
        });
        let per_column_power = match kind {
            MatrixKind::Gaussian | MatrixKind::Bernoulli => r as f64,
            MatrixKind::BlockDiagonal { groups } => (r / groups) as f64,
            MatrixKind::Identity => 1.0,
        };
        let column_scale = 1.0 / per_column_power.sqrt();
        let hat = &real * column_scale;
        FeedbackMatrix {
            kind,
            complex,
            real,
            hat,
            column_scale,
        }
    }

    /// Dedicated feedback: every user on its own channel.
    pub fn identity(n: usize) -> Self {
        Self::from_complex(MatrixKind::Identity, DMatrix::identity(n, n))
    }

    pub fn r(&self) -> usize {
        self.complex.nrows()
    }

    pub fn n(&self) -> usize {
        self.complex.ncols()
    }
}

pub fn generate_feedback_matrix<R: Rng + ?Sized>(
    config: &FeedbackConfig,
    n: usize,
    rng: &mut R,
) -> Result<FeedbackMatrix> {
    let r = config.r;
    let complex = match config.matrix_kind {
        MatrixKind::Gaussian => DMatrix::from_fn(r, n, |_, _| complex_gaussian(rng)),
        MatrixKind::Bernoulli => DMatrix::from_fn(r, n, |_, _| {
            Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)
        }),
        MatrixKind::BlockDiagonal { groups } => {
            check_groups(n, r, config.s, groups)?;
            let (rb, nb) = (r / groups, n / groups);
            let mut a = DMatrix::zeros(r, n);
            for g in 0..groups {
                for j in 0..nb {
                    for i in 0..rb {
                        a[(g * rb + i, g * nb + j)] = complex_gaussian(rng);
                    }
                }
            }
            a
        }
        MatrixKind::Identity => {
            if r != n {
                return Err(Error::invalid("dedicated feedback needs r = n"));
            }
            DMatrix::identity(n, n)
        }
    };
    Ok(FeedbackMatrix::from_complex(config.matrix_kind, complex))
}

/// The length-`n` feedback vector and its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeedbackVector {
    pub values: DVector<f64>,
    pub support: Vec<usize>,
}

impl SparseFeedbackVector {
    /// Support is the set of nonzero entries.
    pub fn from_values(values: DVector<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        SparseFeedbackVector { values, support }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Support member with the largest value.
    pub fn strongest(&self) -> Option<usize> {
        self.support
            .iter()
            .copied()
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
    }
}

/// Users whose best beam is `beam` and whose SINR there exceeds `zeta` send
/// their SINR; everyone else sends nothing.
pub fn encode_analog(table: &SinrTable, beam: usize, zeta: f64) -> SparseFeedbackVector {
    let n = table.n();
    let values = DVector::from_fn(n, |i, _| {
        let x = table.get(i, beam);
        if table.best_beam[i] == beam && x > zeta {
            x
        } else {
            0.0
        }
    });
    SparseFeedbackVector::from_values(values)
}

/// Users whose best-beam SINR lies in `[lo, hi)` send a 1.
pub fn encode_digital(
    table: &SinrTable,
    beam: usize,
    interval: (f64, f64),
) -> SparseFeedbackVector {
    let (lo, hi) = interval;
    let n = table.n();
    let values = DVector::from_fn(n, |i, _| {
        let x = table.get(i, beam);
        if table.best_beam[i] == beam && x >= lo && x < hi {
            1.0
        } else {
            0.0
        }
    });
    SparseFeedbackVector::from_values(values)
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub y: DVector<Complex64>,
    pub noise: DVector<Complex64>,
    pub sigma: f64,
}

/// `y = A v + w` with `w` i.i.d. CN(0, σ²).
pub fn transmit<R: Rng + ?Sized>(
    matrix: &FeedbackMatrix,
    v: &SparseFeedbackVector,
    sigma: f64,
    rng: &mut R,
) -> Measurement {
    let r = matrix.r();
    let noise = DVector::from_fn(r, |_, _| complex_gaussian(rng) * sigma);
    let mut y = noise.clone();
    for &j in &v.support {
        let vj = v.values[j];
        for i in 0..r {
            y[i] += matrix.complex[(i, j)] * vj;
        }
    }
    Measurement { y, noise, sigma }
}

/// `E[X² | X > ζ]` for the per-beam SINR law.
pub fn conditional_second_moment(zeta: f64, params: &SystemParams) -> f64 {
    let tail = ccdf_unchecked(zeta, params);
    // E[X²·1{X>ζ}] = ζ² F̄(ζ) + ∫_ζ^∞ 2x F̄(x) dx; the integrand decays like
    // e^{-x/ρ}, so 60ρ past ζ is far below double precision.
    let upper = zeta + 60.0 * params.rho;
    let integral = integrate(|x| 2.0 * x * ccdf_unchecked(x, params), zeta, upper, 1e-12);
    zeta * zeta + integral / tail
}

/// Noise standard deviation giving per-channel-use feedback SNR
/// `E[|a|²]·E[v²|active] / σ²`.
pub fn sigma_for_feedback_snr(snr_linear: f64, mean_square_value: f64) -> f64 {
    (mean_square_value / snr_linear).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{compute_sinr, generate_downlink, sinr_ccdf};
    use crate::rng::seeded;

    fn params() -> SystemParams {
        SystemParams::new(100, 4, 10.0).unwrap()
    }

    #[test]
    fn channel_counts_at_reported_operating_points() {
        assert_eq!(required_channels(100, 6, 0.4, Rounding::HalfUp), 11);
        assert_eq!(required_channels(100, 1, 2.0, Rounding::Ceil), 10);
        assert_eq!(required_channels(100, 5, 0.8, Rounding::Ceil), 19);
        assert_eq!(required_channels(100, 0, 0.4, Rounding::HalfUp), 0);
    }

    #[test]
    fn single_threshold_edges() {
        let p = params();
        assert_eq!(single_threshold(100, 100, &p).unwrap(), 0.0);
        assert!(single_threshold(100, 101, &p).is_err());
        assert!(single_threshold(100, 0, &p).is_err());
        let z = single_threshold(100, 1, &p).unwrap();
        assert!((z - 3.17).abs() < 0.01);
    }

    #[test]
    fn multi_thresholds_reduce_and_partition() {
        let p = params();
        let one = multi_thresholds(100, 6, 1, &p).unwrap();
        assert_eq!(one.zetas, vec![single_threshold(100, 6, &p).unwrap()]);

        let set = multi_thresholds(100, 1, 4, &p).unwrap();
        assert!((set.zetas[0] - 1.755).abs() < 0.01);
        assert!((set.zetas[3] - 3.17).abs() < 0.01);
        assert!(set.zetas.windows(2).all(|w| w[0] < w[1]));
        for (lo, hi) in set.intervals() {
            let occupancy =
                100.0 * (sinr_ccdf(lo, &p).unwrap() - sinr_ccdf(hi.min(1e300), &p).unwrap());
            assert!((occupancy - 1.0).abs() < 1e-8, "{occupancy}");
        }
        assert!(multi_thresholds(100, 30, 4, &p).is_err());
    }

    #[test]
    fn block_diagonal_structure_and_errors() {
        let mut cfg = FeedbackConfig::analog(100, 6, 0.4, 0.1, Rounding::HalfUp);
        cfg.r = 20;
        cfg.matrix_kind = MatrixKind::BlockDiagonal { groups: 2 };
        let m = generate_feedback_matrix(&cfg, 100, &mut seeded(1)).unwrap();
        let nonzero = m.complex.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2 * 10 * 50);
        assert!((m.column_scale - 1.0 / 10f64.sqrt()).abs() < 1e-15);

        cfg.r = 21;
        assert!(generate_feedback_matrix(&cfg, 100, &mut seeded(1)).is_err());
        cfg.r = 20;
        cfg.s = 5;
        assert!(cfg.validate(100).is_err());
    }

    #[test]
    fn bernoulli_entries_are_signs() {
        let mut cfg = FeedbackConfig::analog(100, 5, 0.8, 0.1, Rounding::Ceil);
        cfg.matrix_kind = MatrixKind::Bernoulli;
        let m = generate_feedback_matrix(&cfg, 100, &mut seeded(2)).unwrap();
        assert!(m
            .complex
            .iter()
            .all(|z| z.im == 0.0 && (z.re == 1.0 || z.re == -1.0)));
        assert!(!m.kind.is_fading());
    }

    #[test]
    fn gaussian_entry_variance_and_column_norms() {
        let mut cfg = FeedbackConfig::analog(1000, 1, 1.0, 0.1, Rounding::HalfUp);
        cfg.r = 100;
        let m = generate_feedback_matrix(&cfg, 1000, &mut seeded(3)).unwrap();
        let var = m.complex.iter().map(|z| z.norm_sqr()).sum::<f64>() / m.complex.len() as f64;
        assert!((0.99..=1.01).contains(&var), "{var}");
        // ‖column of Â‖² ~ χ²(2r)/(2r): mean 1, sd 1/√r per column.
        let norms: Vec<f64> = m.hat.column_iter().map(|c| c.norm_squared()).collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let se = (1.0 / cfg.r as f64).sqrt() / (norms.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn stacking_commutes_with_multiplication() {
        let mut cfg = FeedbackConfig::analog(40, 2, 1.0, 0.1, Rounding::HalfUp);
        cfg.r = 7;
        let m = generate_feedback_matrix(&cfg, 40, &mut seeded(4)).unwrap();
        let v = DVector::from_fn(40, |i, _| if i % 9 == 0 { i as f64 * 0.3 } else { 0.0 });
        let complex_product = &m.complex * v.map(|x| Complex64::new(x, 0.0));
        let stacked_product = &m.real * &v;
        for i in 0..7 {
            assert!((complex_product[i].re - stacked_product[i]).abs() < 1e-12);
            assert!((complex_product[i].im - stacked_product[i + 7]).abs() < 1e-12);
        }
    }

    #[test]
    fn transmit_identities() {
        let mut rng = seeded(5);
        let dedicated = FeedbackMatrix::identity(10);
        let v = SparseFeedbackVector::from_values(DVector::from_fn(10, |i, _| (i % 3) as f64));
        let exact = transmit(&dedicated, &v, 0.0, &mut rng);
        for i in 0..10 {
            assert_eq!(exact.y[i], Complex64::new(v.values[i], 0.0));
        }
        let zero = SparseFeedbackVector::from_values(DVector::zeros(10));
        let noisy = transmit(&dedicated, &zero, 0.3, &mut rng);
        assert_eq!(noisy.y, noisy.noise);
    }

    #[test]
    fn encode_edges() {
        let p = params();
        let mut rng = seeded(6);
        let table = compute_sinr(&generate_downlink(&p, &mut rng), &p);
        assert!(encode_analog(&table, 0, f64::INFINITY).is_empty());

        let single = SystemParams::new(30, 1, 10.0).unwrap();
        let t1 = compute_sinr(&generate_downlink(&single, &mut rng), &single);
        assert_eq!(encode_analog(&t1, 0, 0.0).support.len(), 30);
        let ones = encode_digital(&t1, 0, (0.0, f64::INFINITY));
        assert!(ones.values.iter().all(|&x| x == 1.0));

        let set = multi_thresholds(100, 1, 4, &p).unwrap();
        let supports: Vec<Vec<usize>> = set
            .intervals()
            .map(|q| encode_digital(&table, 2, q).support)
            .collect();
        for a in 0..4 {
            for b in (a + 1)..4 {
                assert!(supports[a].iter().all(|i| !supports[b].contains(i)));
            }
        }
    }

    #[test]
    fn support_sizes_track_threshold_design() {
        // ζ > 1 implies SINR above ζ on beam m makes m the best beam, so each
        // beam holds s strong users on average: p·s per coherence block.
        let p = params();
        let z = single_threshold(100, 6, &p).unwrap();
        let set = multi_thresholds(100, 1, 4, &p).unwrap();
        let mut rng = seeded(7);
        let trials = 4000;
        let (mut analog, mut digital) = (0usize, 0usize);
        for _ in 0..trials {
            let table = compute_sinr(&generate_downlink(&p, &mut rng), &p);
            for m in 0..4 {
                analog += encode_analog(&table, m, z).support.len();
                digital += set
                    .intervals()
                    .map(|q| encode_digital(&table, m, q).support.len())
                    .sum::<usize>();
            }
        }
        let analog = analog as f64 / trials as f64;
        let digital = digital as f64 / trials as f64;
        // Per block: Binomial(100, 0.06) per beam, sd ≈ √(4·5.64)/√4000.
        assert!((analog - 24.0).abs() < 0.3, "{analog}");
        assert!((digital - 16.0).abs() < 0.3, "{digital}");
    }

    #[test]
    fn feedback_snr_calibration() {
        // Measure E‖Av‖²/E‖w‖² for a single strong user at the σ implied by 10 dB.
        let p = params();
        let z = single_threshold(100, 6, &p).unwrap();
        let m2 = conditional_second_moment(z, &p);
        let sigma = sigma_for_feedback_snr(10.0, m2);
        let mut cfg = FeedbackConfig::analog(100, 6, 0.4, sigma, Rounding::HalfUp);
        cfg.r = 11;
        let mut rng = seeded(8);
        let (mut signal, mut noise) = (0.0, 0.0);
        for _ in 0..10_000 {
            let a = generate_feedback_matrix(&cfg, 100, &mut rng).unwrap();
            // Draw one active user value from the conditional law by inversion.
            let u: f64 = rng.random::<f64>() * 0.06;
            let value = sinr_ccdf_inverse(u.max(1e-300), &p).unwrap();
            let mut values = DVector::zeros(100);
            values[0] = value;
            let v = SparseFeedbackVector::from_values(values);
            let meas = transmit(&a, &v, sigma, &mut rng);
            signal += (&meas.y - &meas.noise).norm_squared();
            noise += meas.noise.norm_squared();
        }
        let ratio = signal / noise;
        assert!((ratio / 10.0 - 1.0).abs() < 0.02, "{ratio}");
    }
}
