//! Trains base, full_bias and fact_bias models on a generated task where the
//! right synonym for a concept depends only on who is speaking.

use speaker_nmt::synth::{run_lexicon_experiment, LexiconExperiment};

fn main() -> speaker_nmt::Result<()> {
    let exp = LexiconExperiment::default();
    let out = run_lexicon_experiment(&exp, |msg| eprintln!("{msg}"))?;
    println!(
        "{} train / {} test pairs; majority-synonym baseline {:.3}",
        out.train_pairs, out.test_pairs, out.majority_baseline
    );
    println!("ground truth probe accuracy {:.3}", out.ground_truth_probe);
    println!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>7} {:>8}", "mode", "synonym", "probe", "bleu", "dev_ppl", "epochs", "seconds");
    for m in &out.modes {
        println!(
            "{:<10} {:>8.3} {:>8.3} {:>8.2} {:>8.3} {:>7} {:>8.1}",
            m.mode.as_str(), m.synonym_accuracy, m.probe_accuracy, m.bleu, m.dev_perplexity, m.epochs, m.train_seconds
        );
    }
    Ok(())
}
