//! Channel training: LMMSE gain estimates, the extra channels imperfect
//! training costs, and block-diagonal and chip-sequence alternatives.

use csfb::feedback::Rounding;
use csfb::rng::{complex_gaussian, seeded};
use csfb::training::{block_diagonal_budget, channel_budget, chip_sequence_matrix, train_link};

fn main() -> csfb::Result<()> {
    let mut rng = seeded(5);
    for tau in [1, 2, 4, 8] {
        let gain = complex_gaussian(&mut rng);
        let rec = train_link(tau, 10.0, gain, &mut rng)?;
        println!(
            "tau={tau}: true {gain:.3}, estimate {:.3}, error variance {:.4}",
            rec.a_hat, rec.a_tilde_var
        );
    }

    for a_tilde_sq in [0.0, 0.05, 0.1, 0.3] {
        let b = channel_budget(100, 1, 10.0, 1.0, a_tilde_sq)?;
        println!(
            "error {a_tilde_sq:.2}: r {} -> {} (ratio {:.3}, equivalent snr {:.2})",
            b.r_perfect, b.r_noisy, b.penalty_ratio, b.rho_equiv
        );
    }

    for g in [1, 2] {
        let b = block_diagonal_budget(100, 6, g, 0.4, Rounding::HalfUp)?;
        println!(
            "{g} group(s): {} channels, {} training symbols per user",
            b.channels, b.training_symbols
        );
    }
    let chips = chip_sequence_matrix(100, 19, &mut rng)?;
    println!(
        "chip matrix {}x{}, fading: {}",
        chips.r(),
        chips.n(),
        chips.kind.is_fading()
    );
    Ok(())
}
