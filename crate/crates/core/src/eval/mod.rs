//! Corpus BLEU, paired bootstrap significance, and the speaker classifier probe.

mod bleu;
mod bootstrap;
mod classifier;
mod report;

pub use bleu::{
    bleu_from_stats, corpus_bleu, corpus_stats, sentence_bleu_smoothed, sentence_stats,
    smoothed_bleu_from_stats, BleuReport, BleuStats, MAX_ORDER,
};
pub use bootstrap::{paired_bootstrap, BootstrapResult, DEFAULT_RESAMPLES, SIGNIFICANCE};
pub use classifier::{
    holdout_split, probe_accuracy, train_classifier, ClassifierConfig, Features, SpeakerClassifier,
};
pub use report::{EvalReport, PairwiseTest, SystemReport};
