//! Downlink broadcast channel with random orthonormal beams.
//!
//! Each of the `n` single-antenna users sees an i.i.d. CN(0, 1) channel row
//! `h_i` from the `p`-antenna base station. The base station transmits on `p`
//! Haar-random orthonormal beams, and user `i` measures on beam `m`
//!
//! ```text
//! SINR_{i,m} = |h_i φ_m|² / (1/ρ + Σ_{k≠m} |h_i φ_k|²)
//! ```
//!
//! whose complementary CDF is `exp(-ζ/ρ) / (1+ζ)^{p-1}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_gaussian;

/// Cell-wide downlink parameters (homogeneous users).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of users.
    pub n: usize,
    /// Number of base-station antennas (and beams).
    pub p: usize,
    /// Per-user linear SNR.
    pub rho: f64,
}

impl SystemParams {
    pub fn new(n: usize, p: usize, rho: f64) -> Result<Self> {
        let params = SystemParams { n, p, rho };
        params.validate()?;
        Ok(params)
    }

    /// Build from a per-user SNR in dB.
    pub fn from_db(n: usize, p: usize, snr_db: f64) -> Result<Self> {
        Self::new(n, p, db_to_linear(snr_db))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("antenna count p must be at least 1"));
        }
        if self.n < self.p {
            return Err(Error::invalid(format!(
                "user count n={} must be at least p={}",
                self.n, self.p
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!(
                "SNR rho={} must be positive",
                self.rho
            )));
        }
        Ok(())
    }

    /// Total transmit power `P = p·ρ`.
    pub fn total_power(&self) -> f64 {
        self.p as f64 * self.rho
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One downlink coherence block.
#[derive(Debug, Clone)]
pub struct DownlinkRealization {
    /// `n × p` channel gains; row `i` is user `i`.
    pub h: DMatrix<Complex64>,
    /// `p × p` unitary matrix whose columns are the beams.
    pub beams: DMatrix<Complex64>,
}

impl DownlinkRealization {
    /// `max |Φ*Φ - I|` over all entries.
    pub fn unitarity_error(&self) -> f64 {
        let gram = self.beams.adjoint() * &self.beams;
        let p = gram.nrows();
        let mut worst = 0.0f64;
        for i in 0..p {
            for j in 0..p {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// SINR of every user on every beam, plus each user's best beam.
#[derive(Debug, Clone)]
pub struct SinrTable {
    /// `n × p`, entry `(i, m)` is `SINR_{i,m}`.
    pub sinr: DMatrix<f64>,
    pub best_beam: Vec<usize>,
}

impl SinrTable {
    pub fn n(&self) -> usize {
        self.sinr.nrows()
    }

    pub fn p(&self) -> usize {
        self.sinr.ncols()
    }

    pub fn get(&self, user: usize, beam: usize) -> f64 {
        self.sinr[(user, beam)]
    }

    /// Largest SINR on `beam` among users whose best beam it is.
    pub fn best_on_beam(&self, beam: usize) -> Option<(usize, f64)> {
        (0..self.n())
            .filter(|&i| self.best_beam[i] == beam)
            .map(|i| (i, self.sinr[(i, beam)]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Haar-distributed `p × p` unitary: QR of a Ginibre matrix with the phases
/// of `diag(R)` folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(p, p, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..p {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn generate_downlink<R: Rng + ?Sized>(
    params: &SystemParams,
    rng: &mut R,
) -> DownlinkRealization {
    let h = DMatrix::from_fn(params.n, params.p, |_, _| complex_gaussian(rng));
    let beams = haar_unitary(params.p, rng);
    DownlinkRealization { h, beams }
}

pub fn compute_sinr(real: &DownlinkRealization, params: &SystemParams) -> SinrTable {
    let projected = &real.h * &real.beams;
    let (n, p) = projected.shape();
    let gains = DMatrix::from_fn(n, p, |i, m| projected[(i, m)].norm_sqr());
    let noise = 1.0 / params.rho;
    let mut sinr = DMatrix::zeros(n, p);
    let mut best_beam = vec![0; n];
    for i in 0..n {
        let total: f64 = gains.row(i).iter().sum();
        let mut best = 0;
        for m in 0..p {
            let g = gains[(i, m)];
            // total - g leaves rounding residue when there is a single beam.
            let interference = if p == 1 { 0.0 } else { (total - g).max(0.0) };
            sinr[(i, m)] = g / (noise + interference);
            if sinr[(i, m)] > sinr[(i, best)] {
                best = m;
            }
        }
        best_beam[i] = best;
    }
    SinrTable { sinr, best_beam }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta.is_nan() || zeta < 0.0 {
        return Err(Error::invalid(format!(
            "threshold zeta={zeta} must be nonnegative"
        )));
    }
    Ok(())
}

/// `P[SINR > ζ] = exp(-ζ/ρ) / (1+ζ)^{p-1}`.
pub fn sinr_ccdf(zeta: f64, params: &SystemParams) -> Result<f64> {
    check_zeta(zeta)?;
    Ok(ccdf_unchecked(zeta, params))
}

pub(crate) fn ccdf_unchecked(zeta: f64, params: &SystemParams) -> f64 {
    if zeta.is_infinite() {
        return 0.0;
    }
    (-zeta / params.rho - (params.p as f64 - 1.0) * zeta.ln_1p()).exp()
}

/// `P[SINR ≤ ζ]`.
pub fn sinr_cdf(zeta: f64, params: &SystemParams) -> Result<f64> {
    check_zeta(zeta)?;
    Ok(cdf_unchecked(zeta, params))
}

pub(crate) fn cdf_unchecked(zeta: f64, params: &SystemParams) -> f64 {
    if zeta.is_infinite() {
        return 1.0;
    }
    -(-zeta / params.rho - (params.p as f64 - 1.0) * zeta.ln_1p()).exp_m1()
}

/// Solve `F̄(ζ) = u` by bracketed bisection.
///
/// The upper bracket starts at 1 and doubles until `F̄` drops below `u`.
pub fn sinr_ccdf_inverse(u: f64, params: &SystemParams) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::invalid(format!(
            "probability u={u} must lie in (0, 1]"
        )));
    }
    if u == 1.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ccdf_unchecked(hi, params) >= u {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ccdf_unchecked(mid, params) >= u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn params(p: usize, rho: f64) -> SystemParams {
        SystemParams::new(100, p, rho).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(SystemParams::new(3, 4, 10.0).is_err());
        assert!(SystemParams::new(10, 0, 10.0).is_err());
        assert!(SystemParams::new(10, 2, 0.0).is_err());
        assert!(SystemParams::new(10, 2, f64::NAN).is_err());
    }

    #[test]
    fn single_beam_is_unit_modulus() {
        let mut rng = seeded(3);
        let u = haar_unitary(1, &mut rng);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beams_are_unitary() {
        let mut rng = seeded(4);
        let p = params(4, 10.0);
        for _ in 0..50 {
            let real = generate_downlink(&p, &mut rng);
            assert!(real.unitarity_error() <= 1e-10);
        }
    }

    #[test]
    fn channel_entry_variance() {
        // 10^5 realizations of a 4×100 channel is overkill for a unit test;
        // 2000 blocks give 8·10^5 entries and a ±1% window is still > 10σ.
        let p = params(4, 10.0);
        let mut rng = seeded(5);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..2000 {
            let real = generate_downlink(&p, &mut rng);
            sum += real.h.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += real.h.len();
        }
        let var = sum / count as f64;
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn single_antenna_sinr_is_rho_gain() {
        let p = SystemParams::new(20, 1, 3.0).unwrap();
        let mut rng = seeded(6);
        let real = generate_downlink(&p, &mut rng);
        let table = compute_sinr(&real, &p);
        for i in 0..20 {
            let expected = 3.0 * real.h[(i, 0)].norm_sqr();
            assert!((table.get(i, 0) - expected).abs() < 1e-12 * expected.max(1.0));
            assert_eq!(table.best_beam[i], 0);
        }
    }

    #[test]
    fn best_beam_is_argmax_lowest_index() {
        let p = params(4, 10.0);
        let mut rng = seeded(7);
        let table = compute_sinr(&generate_downlink(&p, &mut rng), &p);
        for i in 0..table.n() {
            let row: Vec<f64> = (0..4).map(|m| table.get(i, m)).collect();
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            let first = row.iter().position(|&x| x == max).unwrap();
            assert_eq!(table.best_beam[i], first);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn ccdf_reference_values() {
        assert_eq!(sinr_ccdf(0.0, &params(4, 10.0)).unwrap(), 1.0);
        let pure = SystemParams::new(5, 1, 1.0).unwrap();
        assert!((sinr_ccdf(1.0, &pure).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(sinr_ccdf(-0.1, &pure).is_err());
        assert!(sinr_cdf(-0.1, &pure).is_err());
        assert_eq!(sinr_cdf(0.0, &pure).unwrap(), 0.0);
    }

    #[test]
    fn inverse_boundaries_and_errors() {
        let p = params(4, 10.0);
        assert_eq!(sinr_ccdf_inverse(1.0, &p).unwrap(), 0.0);
        assert!(sinr_ccdf_inverse(0.0, &p).is_err());
        assert!(sinr_ccdf_inverse(1.5, &p).is_err());
        assert!(sinr_ccdf_inverse(-0.2, &p).is_err());
    }

    #[test]
    fn inverse_at_design_points() {
        let p = params(4, 10.0);
        // F̄(1.4350529) = 0.06 and F̄(3.17..) = 0.01; both within the rounded
        // values 1.431 / 3.17 quoted for this operating point.
        let z6 = sinr_ccdf_inverse(0.06, &p).unwrap();
        assert!((z6 - 1.435_052_887_482_289).abs() < 1e-9, "{z6}");
        assert!((z6 - 1.431).abs() < 0.01);
        let z1 = sinr_ccdf_inverse(0.01, &p).unwrap();
        assert!((z1 - 3.17).abs() < 0.01, "{z1}");
        let z4 = sinr_ccdf_inverse(0.04, &p).unwrap();
        assert!((z4 - 1.755).abs() < 0.01, "{z4}");
        assert!((sinr_cdf(z4, &p).unwrap() - 0.96).abs() < 1e-10);
    }

    #[test]
    fn empirical_ccdf_at_threshold() {
        let p = SystemParams::new(100, 4, 10.0).unwrap();
        let mut rng = seeded(8);
        let mut above = 0usize;
        let mut total = 0usize;
        let mut any_nonpositive = false;
        for _ in 0..1000 {
            let table = compute_sinr(&generate_downlink(&p, &mut rng), &p);
            for x in table.sinr.column(0).iter() {
                any_nonpositive |= *x <= 0.0;
                above += usize::from(*x > 1.431);
                total += 1;
            }
        }
        assert!(!any_nonpositive);
        let frac = above as f64 / total as f64;
        assert!((frac - 0.06).abs() < 0.01, "{frac}");
    }

    #[test]
    fn ccdf_monotone_in_zeta_and_rho() {
        let lo = params(4, 1.0);
        let hi = params(4, 10.0);
        let mut prev = 1.0;
        for i in 1..200 {
            let z = i as f64 * 0.25;
            let v = sinr_ccdf(z, &hi).unwrap();
            assert!(v < prev);
            prev = v;
            assert!(sinr_ccdf(z, &lo).unwrap() < v);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inverse_roundtrip(u in 1e-6f64..1.0, p in 1usize..6, rho in 0.5f64..20.0) {
                let params = SystemParams::new(50, p, rho).unwrap();
                let z = sinr_ccdf_inverse(u, &params).unwrap();
                prop_assert!(z >= 0.0);
                prop_assert!((sinr_ccdf(z, &params).unwrap() - u).abs() <= 1e-10);
            }

            #[test]
            fn inverse_of_ccdf_is_identity(z in 0.0f64..50.0, p in 1usize..5) {
                let params = SystemParams::new(50, p, 10.0).unwrap();
                let u = sinr_ccdf(z, &params).unwrap();
                prop_assume!(u > 1e-300);
                let back = sinr_ccdf_inverse(u, &params).unwrap();
                prop_assert!((back - z).abs() <= 1e-9 * z.max(1.0));
            }

            #[test]
            fn cdf_complements_ccdf(z in 0.0f64..100.0) {
                let params = SystemParams::new(50, 4, 10.0).unwrap();
                let s = sinr_ccdf(z, &params).unwrap() + sinr_cdf(z, &params).unwrap();
                prop_assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }
}
