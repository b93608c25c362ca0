//! Support and value recovery from `y = A v + w`.
//!
//! Everything runs on the real-stacked, column-normalized system
//! `y_real = Â v̂ + w_real`, where `v̂ = v / column_scale` and each real noise
//! coordinate has standard deviation `σ/√2`. Values handed back to callers are
//! always in original `v` units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{default_alpha, FeedbackMatrix, Measurement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryMethod {
    Lasso,
    #[serde(alias = "maxcorr")]
    MaxCorr,
}

impl RecoveryMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecoveryMethod::Lasso => "lasso",
            RecoveryMethod::MaxCorr => "maxcorr",
        }
    }
}

/// Real-valued view of one measurement.
#[derive(Debug, Clone)]
pub struct RealSystem<'a> {
    /// `[Re(y); Im(y)]`.
    pub y: DVector<f64>,
    pub a_hat: &'a DMatrix<f64>,
    /// Multiply a solution of the normalized system by this to get `v`.
    pub scale: f64,
    /// Per-coordinate real noise standard deviation, `σ/√2`.
    pub sigma_real: f64,
}

impl RealSystem<'_> {
    pub fn n(&self) -> usize {
        self.a_hat.ncols()
    }

    /// `Âᵀ y`.
    pub fn correlations(&self) -> DVector<f64> {
        self.a_hat.tr_mul(&self.y)
    }
}

pub fn decompose_real<'a>(
    measurement: &Measurement,
    matrix: &'a FeedbackMatrix,
) -> Result<RealSystem<'a>> {
    let r = measurement.y.len();
    if r != matrix.r() {
        return Err(Error::invalid(format!(
            "measurement has {r} entries but the matrix has {} rows",
            matrix.r()
        )));
    }
    let y = DVector::from_fn(2 * r, |i, _| {
        if i < r {
            measurement.y[i].re
        } else {
            measurement.y[i - r].im
        }
    });
    Ok(RealSystem {
        y,
        a_hat: &matrix.hat,
        scale: matrix.column_scale,
        sigma_real: measurement.sigma / std::f64::consts::SQRT_2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Multiplies the ℓ₁ weight `α σ`.
    pub multiplier: f64,
    /// Use `½‖y − Âv‖²` instead of `‖y − Âv‖²`.
    pub half_fidelity: bool,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            multiplier: 1.0,
            half_fidelity: false,
            tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    /// Solution of the normalized system.
    pub v_hat: DVector<f64>,
    pub sweeps: usize,
    /// Duality gap of the returned point in units of the chosen objective.
    pub gap: f64,
}

impl LassoSolution {
    pub fn support(&self) -> Vec<usize> {
        self.v_hat
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `w‖y − Âv‖² + λ‖v‖₁`, `λ = m·α·σ`, with
/// `w ∈ {1, ½}`.
///
/// The solve is warm-started down a geometric path from `λ_max`, which keeps
/// small-`λ` problems from crawling. At `σ = 0` the ℓ₁ weight collapses; the
/// solver then returns the end of the path, `λ = 10⁻⁴·λ_max`.
pub fn lasso_solve(
    y: &DVector<f64>,
    a_hat: &DMatrix<f64>,
    sigma: f64,
    alpha: f64,
    options: &LassoOptions,
) -> Result<LassoSolution> {
    let (m, n) = a_hat.shape();
    if y.len() != m {
        return Err(Error::invalid(format!(
            "y has {} entries, Â has {m} rows",
            y.len()
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma={sigma} must be ≥ 0")));
    }
    let fidelity = if options.half_fidelity { 0.5 } else { 1.0 };
    let corr_max = a_hat.tr_mul(y).amax();
    // Everything below works on ½‖y − Âv‖² + μ‖v‖₁, which has the same minimizer.
    let mut mu = options.multiplier * alpha * sigma / (2.0 * fidelity);
    if mu == 0.0 {
        mu = 1e-4 * corr_max;
    }
    let mut v = DVector::zeros(n);
    if corr_max <= mu {
        return Ok(LassoSolution {
            v_hat: v,
            sweeps: 0,
            gap: 0.0,
        });
    }
    let col_sq: Vec<f64> = a_hat.column_iter().map(|c| c.norm_squared()).collect();
    let mut residual = y.clone();
    let gap_tol = 1e-8 * (1.0 + y.norm_squared());
    let mut sweeps = 0;
    let mut stage_mu = corr_max;
    loop {
        stage_mu = (0.3 * stage_mu).max(mu);
        let last = stage_mu == mu;
        let budget = options.max_sweeps - sweeps;
        let mut last_update = f64::INFINITY;
        let mut converged = false;
        for _ in 0..budget {
            sweeps += 1;
            last_update = cd_sweep(a_hat, &col_sq, &mut v, &mut residual, stage_mu);
            // Intermediate stages only seed the next one.
            let tol = if last {
                options.tol
            } else {
                options.tol.max(1e-6)
            };
            if last_update < tol {
                if !last {
                    converged = true;
                    break;
                }
                let gap = duality_gap(y, a_hat, &v, &residual, mu) * 2.0 * fidelity;
                if gap <= gap_tol {
                    return Ok(LassoSolution {
                        v_hat: v,
                        sweeps,
                        gap,
                    });
                }
            }
        }
        if !converged {
            return Err(Error::SolverFailure {
                sweeps,
                last_update,
            });
        }
    }
}

fn cd_sweep(
    a: &DMatrix<f64>,
    col_sq: &[f64],
    v: &mut DVector<f64>,
    residual: &mut DVector<f64>,
    mu: f64,
) -> f64 {
    let mut largest = 0.0f64;
    for j in 0..v.len() {
        if col_sq[j] == 0.0 {
            continue;
        }
        let col = a.column(j);
        let old = v[j];
        let rho = col.dot(residual) + col_sq[j] * old;
        let new = soft_threshold(rho, mu) / col_sq[j];
        let delta = new - old;
        if delta != 0.0 {
            residual.axpy(-delta, &col, 1.0);
            v[j] = new;
            largest = largest.max(delta.abs());
        }
    }
    largest
}

/// Gap of `½‖y − Âv‖² + μ‖v‖₁` against the scaled-residual dual point.
fn duality_gap(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    v: &DVector<f64>,
    residual: &DVector<f64>,
    mu: f64,
) -> f64 {
    let primal = 0.5 * residual.norm_squared() + mu * v.lp_norm(1);
    let dual_norm = a.tr_mul(residual).amax();
    let t = if dual_norm > mu { mu / dual_norm } else { 1.0 };
    let theta = residual * t;
    let dual = 0.5 * y.norm_squared() - 0.5 * (y - &theta).norm_squared();
    (primal - dual).max(0.0)
}

fn top_indices(scores: &DVector<f64>, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps lower indices first among equal scores.
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(count);
    idx
}

/// The `s_max` indices with largest `|Âᵀy|`, in descending order.
pub fn maxcorr_support(system: &RealSystem<'_>, s_max: usize) -> Vec<usize> {
    let corr = system.correlations().abs();
    top_indices(&corr, s_max.min(system.n()))
}

/// The `s_max` indices with largest signed `Âᵀy`.
///
/// Fed-back values are positive, so a strongly negative correlation carries
/// no evidence of activity.
pub fn maxcorr_support_signed(system: &RealSystem<'_>, s_max: usize) -> Vec<usize> {
    top_indices(&system.correlations(), s_max.min(system.n()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub support_hat: Vec<usize>,
    /// LS values in original units, aligned with `support_hat`.
    pub v_ls: Vec<f64>,
    /// Largest per-entry standard deviation of the LS error.
    pub sigma_e: f64,
    pub method: RecoveryMethod,
}

impl RecoveryResult {
    fn empty(method: RecoveryMethod) -> Self {
        RecoveryResult {
            support_hat: Vec::new(),
            v_ls: Vec::new(),
            sigma_e: 0.0,
            method,
        }
    }

    /// `(index, value)` of the largest refined value.
    pub fn strongest(&self) -> Option<(usize, f64)> {
        self.support_hat
            .iter()
            .copied()
            .zip(self.v_ls.iter().copied())
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Least squares on the detected support, mapped back to `v` units.
pub fn ls_refine(
    system: &RealSystem<'_>,
    support: &[usize],
    method: RecoveryMethod,
) -> Result<RecoveryResult> {
    if support.is_empty() {
        return Ok(RecoveryResult::empty(method));
    }
    let rows = system.a_hat.nrows();
    if support.len() > rows {
        return Err(Error::Singular {
            support: support.to_vec(),
        });
    }
    let a_s = system.a_hat.select_columns(support);
    let gram = a_s.tr_mul(&a_s);
    let chol = gram.cholesky().ok_or_else(|| Error::Singular {
        support: support.to_vec(),
    })?;
    let rhs = a_s.tr_mul(&system.y);
    let u = chol.solve(&rhs);
    let inv = chol.inverse();
    let max_diag = inv.diagonal().max();
    if !(max_diag.is_finite()) || u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular {
            support: support.to_vec(),
        });
    }
    Ok(RecoveryResult {
        support_hat: support.to_vec(),
        v_ls: u.iter().map(|x| x * system.scale).collect(),
        sigma_e: system.sigma_real * system.scale * max_diag.sqrt(),
        method,
    })
}

/// Refits while dropping the weakest entry as long as it sits below `floor`.
fn prune_below(
    system: &RealSystem<'_>,
    mut support: Vec<usize>,
    floor: f64,
    method: RecoveryMethod,
) -> Result<RecoveryResult> {
    loop {
        let fit = ls_refine(system, &support, method)?;
        let weakest = fit
            .v_ls
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &x)| (i, x));
        match weakest {
            Some((i, x)) if x < floor => {
                support.remove(i);
            }
            _ => return Ok(fit),
        }
    }
}

/// How the protocol turns a measurement into a refined support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRule {
    pub method: RecoveryMethod,
    /// Smallest value an active user can have sent (`ζ` analog, 1 digital).
    pub value_floor: f64,
    /// Candidate count handed to the pruning stage.
    pub candidates: usize,
    pub alpha: f64,
    pub lasso: LassoOptions,
}

impl DetectionRule {
    /// Default rule for design sparsity `s`: up to `3s` candidates, pruned at
    /// half the value floor.
    pub fn new(method: RecoveryMethod, n: usize, s: usize, value_floor: f64) -> Self {
        DetectionRule {
            method,
            value_floor,
            candidates: 3 * s.max(1),
            alpha: default_alpha(n),
            lasso: LassoOptions::default(),
        }
    }
}

/// Detects the active users and refines their values.
///
/// Candidates come from the chosen method, capped one below the real
/// dimension so the LS fit keeps a residual degree of freedom. Entries whose
/// refined value falls below half the value floor are pruned one at a time.
pub fn recover(system: &RealSystem<'_>, rule: &DetectionRule) -> Result<RecoveryResult> {
    let rows = system.a_hat.nrows();
    let cap = rule.candidates.min(rows.saturating_sub(1)).max(1);
    let candidates = match rule.method {
        RecoveryMethod::MaxCorr => {
            let corr = system.correlations();
            top_indices(&corr, cap)
                .into_iter()
                .filter(|&j| corr[j] > 0.0)
                .collect()
        }
        RecoveryMethod::Lasso => {
            let sol = lasso_solve(
                &system.y,
                system.a_hat,
                system.sigma_real,
                rule.alpha,
                &rule.lasso,
            )?;
            let positive = DVector::from_iterator(
                sol.v_hat.len(),
                sol.v_hat.iter().map(|&x| if x > 0.0 { x } else { 0.0 }),
            );
            top_indices(&positive, cap)
                .into_iter()
                .filter(|&j| positive[j] > 0.0)
                .collect()
        }
    };
    prune_below(system, candidates, 0.5 * rule.value_floor, rule.method)
}

/// Dedicated channels: user `j` is declared active when `Re(y_j)` clears half
/// the value floor, and the fed-back value is `Re(y_j)` itself.
pub fn detect_dedicated(
    system: &RealSystem<'_>,
    value_floor: f64,
    method: RecoveryMethod,
) -> RecoveryResult {
    let values = system.correlations() * system.scale;
    let support: Vec<usize> = (0..values.len())
        .filter(|&j| values[j] > 0.5 * value_floor)
        .collect();
    RecoveryResult {
        v_ls: support.iter().map(|&j| values[j]).collect(),
        support_hat: support,
        sigma_e: system.sigma_real * system.scale,
        method,
    }
}

/// Which form of the compressive-sensing success probability to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessBound {
    /// `1 − (2/n)(1/√(2π ln n) + s/n)`.
    #[default]
    WithSparsity,
    /// `1 − (2/n)/√(2π ln n)`.
    WithoutSparsity,
}

/// Lower bound on LASSO support and sign recovery.
pub fn recovery_success_probability(n: usize, s: usize, bound: SuccessBound) -> f64 {
    let nf = n as f64;
    let ln_n = nf.ln();
    let sparsity = match bound {
        SuccessBound::WithSparsity => s as f64 / nf,
        SuccessBound::WithoutSparsity => 0.0,
    };
    (1.0 - (2.0 / nf) * (1.0 / (2.0 * std::f64::consts::PI * ln_n).sqrt() + sparsity))
        .clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConditions {
    /// `8σ√(ln n / r)`: every active value must exceed this.
    pub min_signal_bound: f64,
    /// `c₀ · 2r / ln n`: largest admissible support.
    pub sparsity_bound: f64,
    pub success_prob: f64,
}

impl RecoveryConditions {
    /// Analog admissibility of threshold `zeta`.
    pub fn admits_threshold(&self, zeta: f64) -> bool {
        zeta > self.min_signal_bound
    }

    pub fn admits_sparsity(&self, s: usize) -> bool {
        s as f64 <= self.sparsity_bound
    }
}

pub fn recovery_conditions(
    n: usize,
    r: usize,
    s: usize,
    sigma: f64,
    c0: f64,
) -> Result<RecoveryConditions> {
    if n < 2 || r == 0 || s == 0 || !(sigma >= 0.0) || !(c0 > 0.0) {
        return Err(Error::invalid(format!(
            "recovery conditions need n ≥ 2, r, s ≥ 1, σ ≥ 0, c₀ > 0 (got n={n}, r={r}, s={s}, σ={sigma}, c₀={c0})"
        )));
    }
    let ln_n = (n as f64).ln();
    Ok(RecoveryConditions {
        min_signal_bound: 8.0 * sigma * (ln_n / r as f64).sqrt(),
        sparsity_bound: c0 * 2.0 * r as f64 / ln_n,
        success_prob: recovery_success_probability(n, s, SuccessBound::WithSparsity),
    })
}

/// Largest digital-mode noise level, `(1/8)√(r / ln n)`, at which unit
/// entries still clear the minimum-signal bound.
pub fn digital_sigma_ceiling(n: usize, r: usize) -> f64 {
    (r as f64 / (n as f64).ln()).sqrt() / 8.0
}
