//! Runs the preprocessing pipeline on the bundled toy corpus and prints the
//! split statistics. With a path argument, also rewrites the bundled JSONL.

use speaker_nmt::data::{
    corpus_stats, filter_talks, load_jsonl, make_splits, preprocess, talk_count, write_raw_jsonl,
    PreprocessOptions, Vocabulary, MIN_TALK_SENTENCES, PER_TALK_DEV, PER_TALK_TEST,
};
use speaker_nmt::synth::{toy_corpus, TOY_SEED};

fn main() -> speaker_nmt::Result<()> {
    let raw = toy_corpus(TOY_SEED);
    if let Some(path) = std::env::args().nth(1) {
        write_raw_jsonl(&path, &raw)?;
        assert_eq!(load_jsonl(&path)?, raw);
        println!("wrote {} records to {path}", raw.len());
    }

    let (clean, report) = preprocess(&raw, PreprocessOptions::default());
    println!(
        "{} records: {} dropped empty, {} dropped over {} tokens",
        report.input_pairs,
        report.dropped_empty,
        report.dropped_too_long,
        PreprocessOptions::default().max_tokens
    );
    let kept = filter_talks(&clean, MIN_TALK_SENTENCES);
    println!(
        "{} of {} talks have at least {MIN_TALK_SENTENCES} pairs",
        talk_count(&kept),
        talk_count(&clean)
    );

    let splits = make_splits(&kept, PER_TALK_DEV, PER_TALK_TEST, 1)?;
    let s = corpus_stats(&splits);
    println!("talks {} speakers {} train {} dev {} test {}", s.talks, s.speakers, s.train, s.dev, s.test);
    println!(
        "sentences per talk {:.1} +- {:.1}",
        s.avg_sentences_per_talk, s.std_sentences_per_talk
    );

    let trg = Vocabulary::build(splits.train.iter().map(|e| &e.trg), 40_000, 1)?;
    println!("target vocabulary {} types, first words {:?}", trg.len(), &trg.tokens()[4..12]);
    println!("example: {} => {}", splits.train[0].src.join(" "), splits.train[0].trg.join(" "));
    Ok(())
}
