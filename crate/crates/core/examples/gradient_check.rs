//! Finite-difference check of the full sentence loss in every adaptation mode.

use speaker_nmt::autodiff::grad_check;
use speaker_nmt::data::EncodedExample;
use speaker_nmt::model::{AdaptationMode, ModelConfig, Seq2Seq};
use speaker_nmt::rng;

fn main() -> speaker_nmt::Result<()> {
    let ex = EncodedExample {
        src: vec![4, 7, 5, 9],
        trg: vec![6, 8, 10],
        speaker: Some(1),
    };
    for mode in AdaptationMode::ALL {
        let model = Seq2Seq::<f64>::init(ModelConfig::small(8, 12, 12, 3, mode).with_rank(2), 3)?;
        let eval = grad_check(&model.params, None, 1e-4, |t| model.sentence_loss(t, &ex, None))?;
        // with dropout on, the same seed must give the same masks on every evaluation
        let train = grad_check(&model.params, None, 1e-4, |t| {
            let mut r = rng::seeded(4);
            model.sentence_loss(t, &ex, Some(&mut r))
        })?;
        println!(
            "{:<10} {:>6} coords  eval max rel err {:.2e}  train max rel err {:.2e}",
            mode.as_str(),
            eval.coordinates,
            eval.max_rel_error,
            train.max_rel_error
        );
    }
    Ok(())
}
