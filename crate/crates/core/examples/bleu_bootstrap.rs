//! Corpus BLEU on a small fixture and a paired bootstrap between two systems.

use rand::Rng;
use speaker_nmt::eval::{corpus_bleu, paired_bootstrap, sentence_bleu_smoothed};
use speaker_nmt::rng;

fn main() -> speaker_nmt::Result<()> {
    let refs = ["the cat sat on the mat", "the dog runs fast", "we like green tea"];
    let hyps = ["the cat sat on the mat", "a dog runs", "we we like tea"];
    let split = |v: &[&str]| -> Vec<Vec<String>> {
        v.iter().map(|s| s.split_whitespace().map(str::to_owned).collect()).collect()
    };
    let (refs, hyps) = (split(&refs), split(&hyps));
    let r = corpus_bleu(&hyps, &refs)?;
    println!("BLEU {:.4}  bp {:.4}  precisions {:?}", r.bleu, r.brevity_penalty, r.precisions);
    for (h, rf) in hyps.iter().zip(&refs) {
        println!("  sentence (smoothed) {:.2}: {}", sentence_bleu_smoothed(h, rf).bleu, h.join(" "));
    }

    // two noisy copies of a reference set, one noisier than the other
    let mut g = rng::seeded(3);
    let refs: Vec<Vec<u32>> = (0..300)
        .map(|_| (0..g.random_range(8..20)).map(|_| g.random_range(0..500)).collect())
        .collect();
    let mut noisy = |keep: f64| -> Vec<Vec<u32>> {
        refs.iter()
            .map(|s| s.iter().map(|&t| if g.random_bool(keep) { t } else { t + 500 }).collect())
            .collect()
    };
    let (a, b) = (noisy(0.80), noisy(0.75));
    let res = paired_bootstrap(&a, &b, &refs, 1000, 1)?;
    println!(
        "A {:.2} vs B {:.2}: p = {:.3} ({} resamples), significant: {}",
        res.bleu_a,
        res.bleu_b,
        res.p_value,
        res.resamples,
        res.significant()
    );
    Ok(())
}
