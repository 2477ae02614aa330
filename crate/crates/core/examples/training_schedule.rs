//! Trains a small full_bias model on the bundled toy corpus with the
//! Adam / restart / SGD-finetune schedule and prints the epoch log.

use speaker_nmt::data::{
    encode_corpus, filter_talks, make_splits, preprocess, PreprocessOptions, SpeakerTable, Vocabulary,
};
use speaker_nmt::decode::translate;
use speaker_nmt::model::{AdaptationMode, ModelConfig, Seq2Seq};
use speaker_nmt::synth::{toy_corpus, TOY_SEED};
use speaker_nmt::train::{train_schedule, Seq2SeqObjective, TrainConfig};

fn main() -> speaker_nmt::Result<()> {
    let (clean, _) = preprocess(&toy_corpus(TOY_SEED), PreprocessOptions::default());
    let splits = make_splits(&filter_talks(&clean, 10), 2, 2, 1)?;
    let src = Vocabulary::build(splits.train.iter().map(|e| &e.src), 1000, 1)?;
    let trg = Vocabulary::build(splits.train.iter().map(|e| &e.trg), 1000, 1)?;
    let speakers = SpeakerTable::new(splits.train.iter().map(|e| e.speaker.clone()));
    let train = encode_corpus(&splits.train, &src, &trg, &speakers);
    let dev = encode_corpus(&splits.dev, &src, &trg, &speakers);

    let cfg = ModelConfig::small(24, src.len(), trg.len(), speakers.len(), AdaptationMode::FullBias);
    let model = Seq2Seq::<f32>::init(cfg, 1)?;
    let mut params = model.params.clone();
    let mut obj = Seq2SeqObjective::new(&model, &train, &dev, 16, 1)?;
    let schedule = TrainConfig { max_epochs: 30, finetune_max_epochs: 10, ..TrainConfig::default() };
    let log = train_schedule(&mut params, &mut obj, &schedule, |_, _| Ok(()))?;

    println!("{:<5} {:>5} {:>10} {:>9} {:>9} {:>8}", "phase", "epoch", "lr", "loss", "dev ppl", "");
    for r in &log.records {
        let mark = if r.improved { "best" } else { "restart" };
        println!("{:<5} {:>5} {:>10.2e} {:>9.4} {:>9.3} {:>8}", r.phase, r.epoch, r.lr, r.train_loss, r.dev_ppl, mark);
    }

    let trained = Seq2Seq { params, ..model };
    for ex in splits.test.iter().take(4) {
        let ids = src.encode(&ex.src);
        let out = translate(&trained, &ids, speakers.index(&ex.speaker), 5, None)?;
        println!("{}\n  ref  {}\n  hyp  {}", ex.src.join(" "), ex.trg.join(" "), trg.decode(out.hypothesis.words()).join(" "));
    }
    Ok(())
}
