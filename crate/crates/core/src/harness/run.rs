//! Sweep expansion, parallel trial execution, and calibration.

use rayon::prelude::*;

use crate::channel::{db_to_linear, SystemParams};
use crate::error::{Error, Result};
use crate::feedback::{
    conditional_second_moment, multi_thresholds, required_channels, sigma_for_feedback_snr,
    single_threshold, FeedbackConfig, FeedbackMode, MatrixKind, Rounding,
};
use crate::recovery::{
    digital_sigma_ceiling, recovery_conditions, recovery_success_probability, DetectionRule,
    RecoveryMethod,
};
use crate::throughput::{
    analog_rate_analytic, digital_rate_analytic, digital_rate_literal, effective_rate_at,
    extreme_value_rate, optimal_backoff, prob_some_above, throughput_constant, ThroughputRecord,
};
use crate::training::block_diagonal_budget;
use crate::wishart::{
    asymptotic_beta, closed_form_s1, closed_form_s2, closed_form_s2_literal, ecm_report,
    mc_min_eig_expectation, WishartSpec,
};

use super::config::{ExperimentConfig, MatrixChoice, Scenario};
use super::output::{ResultRow, WishartRow};
use super::pipeline::{run_trial, PointPlan, Receiver, TrialOutcome};

/// One reduced sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub row: ResultRow,
    pub record: ThroughputRecord,
    /// The `p·k·r` budget the point was sized from, if any.
    pub budget_bits: Option<usize>,
    pub solver_failures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Throughput(Vec<PointResult>),
    Wishart(Vec<WishartRow>),
}

impl ExperimentOutput {
    pub fn len(&self) -> usize {
        match self {
            ExperimentOutput::Throughput(r) => r.len(),
            ExperimentOutput::Wishart(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Feedback noise for an analog point at threshold `zeta`.
fn analog_sigma(config: &ExperimentConfig, params: &SystemParams, zeta: f64) -> f64 {
    config.sigma.unwrap_or_else(|| {
        sigma_for_feedback_snr(
            db_to_linear(config.fb_snr_db),
            conditional_second_moment(zeta, params),
        )
    })
}

fn digital_sigma(config: &ExperimentConfig) -> f64 {
    config
        .sigma
        .unwrap_or_else(|| sigma_for_feedback_snr(db_to_linear(config.fb_snr_db), 1.0))
}

struct Draft {
    plan: PointPlan,
    budget_bits: Option<usize>,
}

/// Expands a configuration into its sweep points. Infeasible points are
/// dropped with a logged reason.
pub fn plan_points(config: &ExperimentConfig) -> Result<Vec<(PointPlan, Option<usize>)>> {
    let params = config.system()?;
    let (n, p) = (params.n, params.p);
    let beta_t = throughput_constant(n, p, params.rho)?;
    let mut drafts: Vec<Draft> = Vec::new();
    let base_kind = match config.matrix {
        MatrixChoice::Gaussian => MatrixKind::Gaussian,
        MatrixChoice::Bernoulli => MatrixKind::Bernoulli,
    };
    let ks: Vec<usize> = match config.mode {
        FeedbackMode::Analog => vec![1],
        FeedbackMode::Digital => config.thresholds.clone(),
    };

    for &s in &config.sparsity {
        for &k in &ks {
            if s * k > n {
                log::warn!("skipping s={s}, k={k}: s·k exceeds n={n}");
                continue;
            }
            let thresholds = match config.mode {
                FeedbackMode::Analog => crate::feedback::ThresholdSet {
                    zetas: vec![single_threshold(n, s, &params)?],
                },
                FeedbackMode::Digital => multi_thresholds(n, s, k, &params)?,
            };
            let (sigma, floor) = match config.mode {
                FeedbackMode::Analog => (
                    analog_sigma(config, &params, thresholds.zetas[0]),
                    thresholds.zetas[0],
                ),
                FeedbackMode::Digital => (digital_sigma(config), 1.0),
            };
            let template = |r: usize, kind: MatrixKind, c_half: f64| {
                let mut fb = match config.mode {
                    FeedbackMode::Analog => {
                        FeedbackConfig::analog(n, s, c_half, sigma, config.rounding)
                    }
                    FeedbackMode::Digital => {
                        FeedbackConfig::digital(n, s, k, c_half, sigma, config.rounding)
                    }
                };
                fb.r = r;
                fb.matrix_kind = kind;
                fb.alpha *= config.alpha_multiplier;
                fb
            };
            let rule = |method: RecoveryMethod| {
                let mut rule = DetectionRule::new(method, n, s, floor);
                rule.alpha *= config.alpha_multiplier;
                rule.lasso.half_fidelity = config.half_fidelity;
                rule
            };

            // (r, c_half, budget) for the shared points at this (s, k).
            let mut sizes: Vec<(usize, f64, Option<usize>)> = Vec::new();
            if config.budget_bits.is_empty() {
                for &c in &config.c_half {
                    sizes.push((required_channels(n, s, c, config.rounding), c, None));
                }
            } else {
                for &bits in &config.budget_bits {
                    let r = bits / (p * k);
                    let c = r as f64 / (s as f64 * (n as f64).ln());
                    sizes.push((r, c, Some(bits)));
                }
            }

            for &(r, c_half, budget) in &sizes {
                if r == 0 {
                    log::warn!("skipping s={s}, k={k}, c/2={c_half}: no feedback channels");
                    continue;
                }
                if config.strict_conditions {
                    if let Some(reason) = violated_conditions(config.mode, n, r, s, sigma, floor) {
                        log::warn!("skipping s={s}, k={k}, r={r}: {reason}");
                        continue;
                    }
                }
                for &method in &config.recoveries {
                    drafts.push(Draft {
                        plan: PointPlan {
                            key: 0,
                            params,
                            mode: config.mode,
                            receiver: Receiver::Shared(method),
                            feedback: template(r, base_kind, c_half),
                            c_half,
                            thresholds: thresholds.clone(),
                            rule: rule(method),
                            beta_t,
                        },
                        budget_bits: budget,
                    });
                }
                if let (Some(g), None) = (config.groups, budget) {
                    let block = match block_diagonal_budget(n, s, g, c_half, config.rounding) {
                        Ok(b) => b,
                        Err(e) => {
                            log::warn!("skipping block-diagonal s={s}, c/2={c_half}: {e}");
                            continue;
                        }
                    };
                    for &method in &config.recoveries {
                        drafts.push(Draft {
                            plan: PointPlan {
                                key: 0,
                                params,
                                mode: config.mode,
                                receiver: Receiver::Shared(method),
                                feedback: template(
                                    block.channels,
                                    MatrixKind::BlockDiagonal { groups: g },
                                    c_half,
                                ),
                                c_half,
                                thresholds: thresholds.clone(),
                                rule: rule(method),
                                beta_t,
                            },
                            budget_bits: None,
                        });
                    }
                }
            }

            for (enabled, noisy) in [
                (config.dedicated_noisy, true),
                (config.dedicated_noiseless, false),
            ] {
                if !enabled {
                    continue;
                }
                let fb = FeedbackConfig {
                    r: n,
                    matrix_kind: MatrixKind::Identity,
                    sigma: if noisy { sigma } else { 0.0 },
                    c_half: 0.0,
                    ..template(n, MatrixKind::Identity, 0.0)
                };
                drafts.push(Draft {
                    plan: PointPlan {
                        key: 0,
                        params,
                        mode: config.mode,
                        receiver: Receiver::Dedicated { noisy },
                        feedback: fb,
                        c_half: 0.0,
                        thresholds: thresholds.clone(),
                        rule: rule(RecoveryMethod::MaxCorr),
                        beta_t,
                    },
                    budget_bits: None,
                });
            }
        }
    }

    Ok(drafts
        .into_iter()
        .enumerate()
        .map(|(i, mut d)| {
            d.plan.key = i as u64 + 1;
            (d.plan, d.budget_bits)
        })
        .collect())
}

fn violated_conditions(
    mode: FeedbackMode,
    n: usize,
    r: usize,
    s: usize,
    sigma: f64,
    floor: f64,
) -> Option<String> {
    let cond = recovery_conditions(n, r, s, sigma, 1.0).ok()?;
    match mode {
        FeedbackMode::Analog if !cond.admits_threshold(floor) => Some(format!(
            "threshold {floor:.3} is below the minimum-signal bound {:.3}",
            cond.min_signal_bound
        )),
        FeedbackMode::Digital if sigma > digital_sigma_ceiling(n, r) => Some(format!(
            "σ={sigma:.3} exceeds the digital ceiling {:.3}",
            digital_sigma_ceiling(n, r)
        )),
        _ if !cond.admits_sparsity(s) => Some(format!(
            "s={s} exceeds the sparsity bound {:.2}",
            cond.sparsity_bound
        )),
        _ => None,
    }
}

/// Runs every trial of one point in parallel and reduces in trial order.
pub fn run_point(plan: &PointPlan, trials: usize, seed: u64) -> Result<Vec<TrialOutcome>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(plan, seed, t))
        .collect()
}

fn reduce(
    plan: &PointPlan,
    outcomes: &[TrialOutcome],
    config: &ExperimentConfig,
    budget_bits: Option<usize>,
) -> Result<PointResult> {
    let params = plan.params;
    let (n, p, rho) = (params.n, params.p, params.rho);
    let s = plan.feedback.s;
    let k = plan.thresholds.k();
    let trials = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.rate).sum::<f64>() / trials;
    let var = if outcomes.len() > 1 {
        outcomes
            .iter()
            .map(|o| (o.rate - mean).powi(2))
            .sum::<f64>()
            / (trials - 1.0)
    } else {
        0.0
    };
    let exact: u64 = outcomes.iter().map(|o| o.exact as u64).sum();
    let attempts: u64 = outcomes.iter().map(|o| o.attempts as u64).sum();
    let se_count: u64 = outcomes.iter().map(|o| o.sigma_e_count as u64).sum();
    let sigma_e = if se_count > 0 {
        outcomes.iter().map(|o| o.sigma_e_sum).sum::<f64>() / se_count as f64
    } else {
        0.0
    };
    let failures: u64 = outcomes.iter().map(|o| o.solver_failures as u64).sum();
    if failures > 0 {
        log::warn!(
            "{} recoveries hit solver failures at r={}, s={s}",
            failures,
            plan.channels()
        );
    }

    let bound = config.success_bound;
    let shared = matches!(plan.receiver, Receiver::Shared(_));
    let nan = f64::NAN;
    let p_b = prob_some_above(n, (s * k) as f64 / n as f64);
    let p_a = if shared {
        recovery_success_probability(n, s, bound)
    } else {
        1.0
    };
    let analytic_r = extreme_value_rate(n, p, rho)?;
    let (delta_star, ra, reff, rd, rd_literal) = match plan.mode {
        FeedbackMode::Analog => {
            let delta = optimal_backoff(plan.beta_t, sigma_e)?.delta;
            let (ra, reff) = if shared {
                (
                    analog_rate_analytic(n, p, rho, s, bound)?,
                    effective_rate_at(n, p, rho, s, sigma_e, delta, bound)?,
                )
            } else {
                (nan, nan)
            };
            (delta, ra, reff, nan, nan)
        }
        FeedbackMode::Digital => {
            let (rd, lit) = if shared {
                (
                    digital_rate_analytic(&params, s, &plan.thresholds, bound)?,
                    digital_rate_literal(&params, s, &plan.thresholds, bound)?,
                )
            } else {
                (nan, nan)
            };
            (0.0, nan, nan, rd, lit)
        }
    };
    let r = plan.channels();
    let bits_fed = match plan.mode {
        FeedbackMode::Analog => p * r,
        FeedbackMode::Digital => p * k * r,
    };
    let rate_se = (var / trials).sqrt();
    let row = ResultRow {
        scenario: config.scenario.as_str().to_string(),
        n,
        p,
        rho,
        mode: plan.mode.as_str().to_string(),
        recovery: plan.receiver.label(plan.feedback.matrix_kind),
        r,
        s,
        k,
        c_half: plan.c_half,
        sigma: plan.sigma(),
        delta_star,
        rate_emp: mean,
        rate_se,
        rate_r: analytic_r,
        rate_ra: ra,
        rate_reff: reff,
        rate_rd: rd,
        recov_rate: if attempts > 0 {
            exact as f64 / attempts as f64
        } else {
            nan
        },
        bits_fed,
    };
    let record = ThroughputRecord {
        empirical_rate: mean,
        empirical_se: rate_se,
        analytic_r,
        analytic_ra: ra,
        analytic_reff: reff,
        analytic_rd: rd,
        analytic_rd_literal: rd_literal,
        p_a,
        p_b,
    };
    Ok(PointResult {
        row,
        record,
        budget_bits,
        solver_failures: failures,
    })
}

/// Runs a whole experiment. Results are identical for a fixed seed whatever
/// the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    if config.scenario.is_wishart() {
        return run_wishart(config).map(ExperimentOutput::Wishart);
    }
    let plans = plan_points(config)?;
    if plans.is_empty() {
        return Err(Error::AllInfeasible);
    }
    let mut results = Vec::with_capacity(plans.len());
    for (i, (plan, budget)) in plans.iter().enumerate() {
        log::info!(
            "point {}/{}: {} r={} s={} k={} σ={:.4}",
            i + 1,
            plans.len(),
            plan.receiver.label(plan.feedback.matrix_kind),
            plan.channels(),
            plan.feedback.s,
            plan.thresholds.k(),
            plan.sigma()
        );
        let outcomes = run_point(plan, config.trials, config.seed)?;
        results.push(reduce(plan, &outcomes, config, *budget)?);
    }
    Ok(ExperimentOutput::Throughput(results))
}

fn run_wishart(config: &ExperimentConfig) -> Result<Vec<WishartRow>> {
    let rho = config.wishart_rho;
    let v = if config.literal_wishart { 1.0 } else { 0.5 };
    let trials = config.trials.max(1000);
    let nan = f64::NAN;
    let mut rows = Vec::new();
    let mut push = |row: WishartRow| rows.push(row);
    match config.scenario {
        Scenario::Fig1 => {
            let sigma_v = config.sigma.unwrap_or(1.0);
            for &s in &config.sparsity {
                for &r in config.wishart_r.iter().filter(|&&r| 2 * r >= s) {
                    let spec = WishartSpec::new(s, r, rho)?.with_entry_variance(v);
                    let rep = ecm_report(&spec, sigma_v, trials, config.seed)?;
                    let closed = if s == 1 { rep.shared_bound } else { nan };
                    let scale = sigma_v * sigma_v;
                    push(WishartRow::new(
                        config.scenario,
                        &spec,
                        nan,
                        closed,
                        nan,
                        rep.mc.mean * scale,
                        rep.mc.stderr * scale,
                        rep.dedicated_value,
                        trials,
                    ));
                }
            }
        }
        Scenario::Fig7 => {
            for &s in config.sparsity.iter().filter(|&&s| s <= 2) {
                for &r in config.wishart_r.iter().filter(|&&r| r >= s) {
                    let (spec, closed) = if s == 1 {
                        let spec = WishartSpec::new(1, r, rho)?.with_entry_variance(v);
                        (spec, closed_form_s1(r, rho, v)?)
                    } else {
                        let spec = WishartSpec::complex(2, r, rho)?;
                        let closed = if config.literal_wishart {
                            match closed_form_s2_literal(r, rho) {
                                Ok(x) => x,
                                Err(e) => {
                                    log::warn!("r={r}: {e}");
                                    nan
                                }
                            }
                        } else {
                            closed_form_s2(r, rho)?
                        };
                        (spec, closed)
                    };
                    let mc = mc_min_eig_expectation(&spec, trials, config.seed)?;
                    push(WishartRow::new(
                        config.scenario,
                        &spec,
                        nan,
                        closed,
                        nan,
                        mc.mean,
                        mc.stderr,
                        nan,
                        trials,
                    ));
                }
            }
        }
        Scenario::Fig8 => {
            for &beta in &config.wishart_beta {
                for &r in &config.wishart_r {
                    let s = ((2 * r) as f64 * beta).round().max(1.0) as usize;
                    if s >= 2 * r {
                        log::warn!("skipping β={beta}, r={r}: s={s} fills the matrix");
                        continue;
                    }
                    let spec = WishartSpec::new(s, r, rho)?.with_entry_variance(v);
                    let asym = asymptotic_beta(r, spec.beta_ar(), rho, v)?;
                    let mc = mc_min_eig_expectation(&spec, trials, config.seed)?;
                    push(WishartRow::new(
                        config.scenario,
                        &spec,
                        beta,
                        nan,
                        asym,
                        mc.mean,
                        mc.stderr,
                        nan,
                        trials,
                    ));
                }
            }
        }
        other => {
            return Err(Error::Config(format!(
                "{} is not an eigenvalue scenario",
                other.as_str()
            )))
        }
    }
    if rows.is_empty() {
        return Err(Error::AllInfeasible);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Candidate `c/2` values, searched in ascending order.
    pub grid: Vec<f64>,
    pub trials: usize,
    pub sigma: f64,
    pub method: RecoveryMethod,
    pub rounding: Rounding,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            grid: (1..=40).map(|i| i as f64 / 20.0).collect(),
            trials: 10_000,
            sigma: 0.1,
            method: RecoveryMethod::Lasso,
            rounding: Rounding::HalfUp,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub c_half: f64,
    pub r: usize,
    pub success_rate: f64,
    /// False when no grid value reached the target.
    pub reached: bool,
}

/// Exact-support recovery rate of analog feedback at `r` channels.
pub fn support_recovery_rate(
    params: &SystemParams,
    s: usize,
    r: usize,
    options: &CalibrationOptions,
) -> Result<f64> {
    let zeta = single_threshold(params.n, s, params)?;
    let mut feedback = FeedbackConfig::analog(params.n, s, 1.0, options.sigma, options.rounding);
    feedback.r = r;
    let plan = PointPlan {
        key: r as u64,
        params: *params,
        mode: FeedbackMode::Analog,
        receiver: Receiver::Shared(options.method),
        c_half: 0.0,
        thresholds: crate::feedback::ThresholdSet { zetas: vec![zeta] },
        rule: DetectionRule::new(options.method, params.n, s, zeta),
        beta_t: throughput_constant(params.n, params.p, params.rho)?,
        feedback,
    };
    let outcomes = run_point(&plan, options.trials, options.seed)?;
    let exact: u64 = outcomes.iter().map(|o| o.exact as u64).sum();
    let attempts: u64 = outcomes.iter().map(|o| o.attempts as u64).sum();
    Ok(exact as f64 / attempts as f64)
}

/// Smallest grid `c/2` whose channel count reaches `target` exact-support
/// recovery. An unreachable target returns the largest grid value.
///
/// The rate is taken to be nondecreasing in `r`, so the grid is bisected.
pub fn calibrate_c(
    params: &SystemParams,
    s: usize,
    target: f64,
    options: &CalibrationOptions,
) -> Result<Calibration> {
    if !(target > 0.5 && target < 1.0) {
        return Err(Error::invalid(format!(
            "calibration target {target} must lie in (0.5, 1)"
        )));
    }
    let mut grid: Vec<(f64, usize)> = options
        .grid
        .iter()
        .map(|&c| (c, required_channels(params.n, s, c, options.rounding)))
        .filter(|&(_, r)| r > 0)
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    if grid.is_empty() {
        return Err(Error::invalid(
            "no grid value gives a positive channel count",
        ));
    }
    let mut cache: Vec<(usize, f64)> = Vec::new();
    let mut rate_at = |r: usize| -> Result<f64> {
        if let Some(&(_, rate)) = cache.iter().find(|(cr, _)| *cr == r) {
            return Ok(rate);
        }
        let rate = support_recovery_rate(params, s, r, options)?;
        cache.push((r, rate));
        Ok(rate)
    };
    let calibration = |(c_half, r): (f64, usize), rate: f64| Calibration {
        c_half,
        r,
        success_rate: rate,
        reached: rate >= target,
    };
    let last = grid[grid.len() - 1];
    let top = rate_at(last.1)?;
    if top < target {
        log::warn!(
            "target {target} not reached on the grid; returning c/2={}",
            last.0
        );
        return Ok(calibration(last, top));
    }
    // Invariant: grid[hi] reaches the target, everything below lo does not.
    let (mut lo, mut hi) = (0, grid.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if rate_at(grid[mid].1)? >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let rate = rate_at(grid[hi].1)?;
    Ok(calibration(grid[hi], rate))
}
