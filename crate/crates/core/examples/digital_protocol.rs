//! Multi-threshold digital feedback: users send a 1 on the channels of the
//! interval holding their SINR; the base station serves the top interval.

use csfb::channel::{compute_sinr, generate_downlink, SystemParams};
use csfb::feedback::{
    encode_digital, generate_feedback_matrix, multi_thresholds, transmit, FeedbackConfig, Rounding,
};
use csfb::recovery::{decompose_real, recover, DetectionRule, RecoveryMethod, SuccessBound};
use csfb::rng::trial_rng;
use csfb::throughput::{digital_rate_analytic, ideal_digital_rate, score_digital};

fn main() -> csfb::Result<()> {
    let params = SystemParams::from_db(100, 4, 10.0)?;
    let (n, s, k) = (params.n, 1, 4);
    let sigma = 0.1f64.sqrt();
    let config = FeedbackConfig::digital(n, s, k, 2.0, sigma, Rounding::Ceil);
    let thresholds = multi_thresholds(n, s, k, &params)?;
    let rule = DetectionRule::new(RecoveryMethod::MaxCorr, n, s, 1.0);

    let trials = 2000;
    let (mut shared, mut ideal) = (0.0, 0.0);
    for t in 0..trials {
        let mut rng = trial_rng(3, 0, t);
        let table = compute_sinr(&generate_downlink(&params, &mut rng), &params);
        let matrix = generate_feedback_matrix(&config, n, &mut rng)?;
        let mut per_beam = Vec::new();
        for beam in 0..params.p {
            let mut per_interval = Vec::new();
            for q in thresholds.intervals() {
                let v = encode_digital(&table, beam, q);
                let meas = transmit(&matrix, &v, sigma, &mut rng);
                per_interval.push(recover(&decompose_real(&meas, &matrix)?, &rule)?);
            }
            per_beam.push(per_interval);
        }
        shared += score_digital(&per_beam, &table, &thresholds, &mut rng);
        ideal += ideal_digital_rate(&table, &thresholds);
    }
    let analytic = digital_rate_analytic(&params, s, &thresholds, SuccessBound::WithSparsity)?;
    println!(
        "r={} channels, {} bits per round",
        config.r,
        params.p * k * config.r
    );
    println!("shared    {:.4}", shared / trials as f64);
    println!("noiseless {:.4}", ideal / trials as f64);
    println!("analytic  {analytic:.4}");
    Ok(())
}
