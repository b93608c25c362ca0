//! One sweep point and one Monte-Carlo trial of the full protocol:
//! downlink, SINR, thresholds, encode, transmit, recover, refine, back off,
//! select, score.

use crate::channel::{compute_sinr, generate_downlink, SinrTable, SystemParams};
use crate::error::{Error, Result};
use crate::feedback::{
    encode_analog, encode_digital, generate_feedback_matrix, transmit, FeedbackConfig,
    FeedbackMatrix, FeedbackMode, MatrixKind, SparseFeedbackVector, ThresholdSet,
};
use crate::recovery::{
    decompose_real, detect_dedicated, recover, DetectionRule, RecoveryMethod, RecoveryResult,
};
use crate::rng::trial_rng;
use crate::throughput::{optimal_backoff, score_analog, score_digital};

/// Stream key for the downlink draw. Every point of a run sees the same
/// channel realizations, so curves and baselines are paired.
pub const DOWNLINK_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Shared(RecoveryMethod),
    /// One channel per user. `noisy = false` is ideal feedback.
    Dedicated {
        noisy: bool,
    },
}

impl Receiver {
    pub fn label(&self, matrix: MatrixKind) -> String {
        match (self, matrix) {
            (Receiver::Shared(m), MatrixKind::BlockDiagonal { groups }) => {
                format!("{}-block{groups}", m.as_str())
            }
            (Receiver::Shared(m), MatrixKind::Bernoulli) => format!("{}-chip", m.as_str()),
            (Receiver::Shared(m), _) => m.as_str().to_string(),
            (Receiver::Dedicated { noisy: true }, _) => "dedicated-noisy".to_string(),
            (Receiver::Dedicated { noisy: false }, _) => "dedicated-noiseless".to_string(),
        }
    }
}

/// Everything a trial needs, resolved once per sweep point.
#[derive(Debug, Clone)]
pub struct PointPlan {
    /// Stream key for this point's feedback randomness.
    pub key: u64,
    pub params: SystemParams,
    pub mode: FeedbackMode,
    pub receiver: Receiver,
    pub feedback: FeedbackConfig,
    pub c_half: f64,
    /// Analog uses the single entry.
    pub thresholds: ThresholdSet,
    pub rule: DetectionRule,
    pub beta_t: f64,
}

impl PointPlan {
    pub fn sigma(&self) -> f64 {
        self.feedback.sigma
    }

    /// Channels actually used per feedback round.
    pub fn channels(&self) -> usize {
        match self.receiver {
            Receiver::Shared(_) => self.feedback.r,
            Receiver::Dedicated { .. } => self.params.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialOutcome {
    pub rate: f64,
    /// Recoveries whose support matched the truth exactly.
    pub exact: u32,
    pub attempts: u32,
    /// Sum of `σ_e` over nonempty analog recoveries.
    pub sigma_e_sum: f64,
    pub sigma_e_count: u32,
    pub solver_failures: u32,
}

fn same_support(rec: &RecoveryResult, truth: &SparseFeedbackVector) -> bool {
    let mut got = rec.support_hat.clone();
    got.sort_unstable();
    got == truth.support
}

fn recover_one(
    plan: &PointPlan,
    matrix: &FeedbackMatrix,
    v: &SparseFeedbackVector,
    floor: f64,
    rng: &mut crate::rng::TrialRng,
    failures: &mut u32,
) -> Result<RecoveryResult> {
    let meas = transmit(matrix, v, plan.sigma(), rng);
    let system = decompose_real(&meas, matrix)?;
    let method = plan.rule.method;
    match plan.receiver {
        Receiver::Dedicated { .. } => Ok(detect_dedicated(&system, floor, method)),
        Receiver::Shared(_) => {
            let rule = DetectionRule {
                value_floor: floor,
                ..plan.rule
            };
            match recover(&system, &rule) {
                Ok(r) => Ok(r),
                Err(e @ (Error::SolverFailure { .. } | Error::Singular { .. })) => {
                    log::debug!("trial recovery failed: {e}");
                    *failures += 1;
                    Ok(RecoveryResult {
                        support_hat: Vec::new(),
                        v_ls: Vec::new(),
                        sigma_e: 0.0,
                        method,
                    })
                }
                Err(e) => Err(e),
            }
        }
    }
}

pub fn draw_table(params: &SystemParams, seed: u64, trial: u64) -> SinrTable {
    let mut rng = trial_rng(seed, DOWNLINK_STREAM, trial);
    compute_sinr(&generate_downlink(params, &mut rng), params)
}

pub fn run_trial(plan: &PointPlan, seed: u64, trial: u64) -> Result<TrialOutcome> {
    let table = draw_table(&plan.params, seed, trial);
    let mut rng = trial_rng(seed, plan.key, trial);
    let matrix = match plan.receiver {
        Receiver::Shared(_) => generate_feedback_matrix(&plan.feedback, plan.params.n, &mut rng)?,
        Receiver::Dedicated { .. } => FeedbackMatrix::identity(plan.params.n),
    };
    let p = plan.params.p;
    let mut out = TrialOutcome::default();
    match plan.mode {
        FeedbackMode::Analog => {
            let zeta = plan.thresholds.zetas[0];
            let mut recs = Vec::with_capacity(p);
            let mut deltas = Vec::with_capacity(p);
            for beam in 0..p {
                let v = encode_analog(&table, beam, zeta);
                let rec = recover_one(plan, &matrix, &v, zeta, &mut rng, &mut out.solver_failures)?;
                out.attempts += 1;
                out.exact += same_support(&rec, &v) as u32;
                if !rec.support_hat.is_empty() {
                    out.sigma_e_sum += rec.sigma_e;
                    out.sigma_e_count += 1;
                }
                deltas.push(optimal_backoff(plan.beta_t, rec.sigma_e)?.delta);
                recs.push(rec);
            }
            out.rate = score_analog(&recs, &table, &deltas);
        }
        FeedbackMode::Digital => {
            let mut recs = Vec::with_capacity(p);
            for beam in 0..p {
                let mut per_interval = Vec::with_capacity(plan.thresholds.k());
                for q in plan.thresholds.intervals() {
                    let v = encode_digital(&table, beam, q);
                    let rec =
                        recover_one(plan, &matrix, &v, 1.0, &mut rng, &mut out.solver_failures)?;
                    out.attempts += 1;
                    out.exact += same_support(&rec, &v) as u32;
                    per_interval.push(rec);
                }
                recs.push(per_interval);
            }
            out.rate = score_digital(&recs, &table, &plan.thresholds, &mut rng);
        }
    }
    Ok(out)
}
