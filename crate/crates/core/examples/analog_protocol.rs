//! One analog feedback round, step by step: downlink, strong users,
//! shared-channel transmission, recovery, back-off, scheduling.

use csfb::channel::{compute_sinr, generate_downlink, SystemParams};
use csfb::feedback::{
    conditional_second_moment, encode_analog, generate_feedback_matrix, sigma_for_feedback_snr,
    single_threshold, transmit, FeedbackConfig, Rounding,
};
use csfb::recovery::{decompose_real, recover, DetectionRule, RecoveryMethod};
use csfb::rng::seeded;
use csfb::throughput::{ideal_analog_rate, optimal_backoff, score_analog, throughput_constant};

fn main() -> csfb::Result<()> {
    let params = SystemParams::from_db(100, 4, 10.0)?;
    let (n, s) = (params.n, 5);
    let zeta = single_threshold(n, s, &params)?;
    let sigma = sigma_for_feedback_snr(10.0, conditional_second_moment(zeta, &params));
    let config = FeedbackConfig::analog(n, s, 0.8, sigma, Rounding::Ceil);
    let beta_t = throughput_constant(n, params.p, params.rho)?;
    println!("zeta={zeta:.3} sigma={sigma:.3} r={}", config.r);

    let mut rng = seeded(7);
    let table = compute_sinr(&generate_downlink(&params, &mut rng), &params);
    let matrix = generate_feedback_matrix(&config, n, &mut rng)?;
    let rule = DetectionRule::new(RecoveryMethod::MaxCorr, n, s, zeta);

    let mut recoveries = Vec::new();
    let mut deltas = Vec::new();
    for beam in 0..params.p {
        let v = encode_analog(&table, beam, zeta);
        let meas = transmit(&matrix, &v, sigma, &mut rng);
        let rec = recover(&decompose_real(&meas, &matrix)?, &rule)?;
        let delta = optimal_backoff(beta_t, rec.sigma_e)?.delta;
        println!(
            "beam {beam}: sent {:?}, recovered {:?}, values {:?}, back-off {delta:.3}",
            v.support,
            rec.support_hat,
            rec.v_ls
                .iter()
                .map(|x| format!("{x:.2}"))
                .collect::<Vec<_>>()
        );
        recoveries.push(rec);
        deltas.push(delta);
    }
    println!(
        "scheduled rate {:.3} bit/s/Hz",
        score_analog(&recoveries, &table, &deltas)
    );
    println!(
        "perfect-feedback rate {:.3} bit/s/Hz",
        ideal_analog_rate(&table, zeta)
    );
    Ok(())
}
