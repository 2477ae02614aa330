//! Parameter counts at full size and the savings of the factored bias.

use speaker_nmt::model::{count_params, factored_reduction, format_counts, AdaptationMode, ModelConfig};

fn main() {
    let full = ModelConfig::full_size(40_000, 40_000, 1887, AdaptationMode::FullBias);
    println!("{}", format_counts(&count_params(&full)));

    println!("{:<10} {:>12} {:>12} {:>10}", "mode", "total", "adaptation", "per spk");
    for mode in AdaptationMode::ALL {
        let c = count_params(&ModelConfig { mode, ..full.clone() });
        println!("{:<10} {:>12} {:>12} {:>10}", mode.as_str(), c.total, c.adaptation_total, c.per_speaker);
    }

    for speakers in [1887, 1670] {
        println!(
            "{speakers} speakers, rank 10: fact_bias needs {:.2}% fewer adaptation parameters",
            100.0 * factored_reduction(speakers, 40_000, 10)
        );
    }
    for rank in [1, 5, 10, 50, 200] {
        println!("rank {rank:>3}: {:.3}%", 100.0 * factored_reduction(1887, 40_000, rank));
    }
}
