//! Scores and decodes a BIO tag sequence with a linear-chain CRF.
//!
//!     cargo run --example crf_decode

use stf_ee::event::{crf_negative_log_likelihood, log_partition, sequence_score, viterbi};
use stf_ee::tensor::Tensor;

fn main() -> stf_ee::Result<()> {
    let tags = ["O", "B-Attack", "I-Attack"];
    let tokens = ["they", "opened", "fire", "today"];
    #[rustfmt::skip]
    let emissions = Tensor::from_vec(4, 3, vec![
        2.0, 0.1, -1.0,
        0.2, 1.5,  0.3,
        0.4, 0.1,  1.2,
        1.8, 0.3,  0.1,
    ]);
    // I after O is strongly discouraged.
    #[rustfmt::skip]
    let transitions = Tensor::from_vec(3, 3, vec![
        0.5, 0.0, -4.0,
        0.0, -1.0, 1.0,
        0.0, 0.0,  0.5,
    ]);

    let best = viterbi(&emissions, &transitions)?;
    let z = log_partition(&emissions, &transitions)?;
    for (t, &y) in tokens.iter().zip(&best) {
        println!("{t:<8} {}", tags[y]);
    }
    println!("\nlog Z = {z:.4}");
    let score = sequence_score(&emissions, &transitions, &best);
    println!("best path score {score:.4}, probability {:.3}", (score - z).exp());
    let alt = [0, 1, 0, 0];
    println!(
        "NLL of {:?}: {:.4}",
        alt.iter().map(|&y| tags[y]).collect::<Vec<_>>(),
        crf_negative_log_likelihood(&emissions, &transitions, &alt)?
    );
    Ok(())
}
