//! Corpus ingestion, preprocessing, vocabularies, per-talk splits and batching.

mod batch;
mod corpus;
mod split;
mod tokenize;
mod vocab;

pub use batch::{encode_corpus, make_batches, Batch, EncodedExample, BATCH_SIZE};
pub use corpus::{
    load_corpus, load_jsonl, load_parallel_text, preprocess, write_jsonl, write_raw_jsonl, CorpusFormat,
    ParallelCorpus, ParallelExample, ParallelTextPaths, PreprocessOptions, PreprocessReport,
    RawExample, MAX_SENTENCE_TOKENS,
};
pub use split::{
    corpus_stats, filter_talks, make_splits, talk_count, CorpusStats, Splits, MIN_TALK_SENTENCES,
    PER_TALK_DEV, PER_TALK_TEST,
};
pub use tokenize::{split_pretokenized, tokenize};
pub use vocab::{
    SpeakerTable, Vocabulary, BOS, DEFAULT_MAX_SIZE, DEFAULT_MIN_COUNT, EOS, NUM_SPECIALS, PAD,
    SPECIAL_TOKENS, UNK,
};
