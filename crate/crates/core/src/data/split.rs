use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::ParallelExample;
use crate::error::{Error, Result};

pub const MIN_TALK_SENTENCES: usize = 10;
pub const PER_TALK_DEV: usize = 2;
pub const PER_TALK_TEST: usize = 2;

/// Example indices grouped by talk, talks in lexicographic order and indices
/// in corpus order.
fn by_talk(corpus: &[ParallelExample]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in corpus.iter().enumerate() {
        groups.entry(ex.talk.as_str()).or_default().push(i);
    }
    groups
}

/// Removes every talk with fewer than `min_sentences` pairs. Order is preserved.
pub fn filter_talks(corpus: &[ParallelExample], min_sentences: usize) -> Vec<ParallelExample> {
    let groups = by_talk(corpus);
    corpus
        .iter()
        .filter(|ex| groups[ex.talk.as_str()].len() >= min_sentences)
        .cloned()
        .collect()
}

pub fn talk_count(corpus: &[ParallelExample]) -> usize {
    by_talk(corpus).len()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<ParallelExample>,
    pub dev: Vec<ParallelExample>,
    pub test: Vec<ParallelExample>,
}

/// Draws `per_talk_dev` and `per_talk_test` pairs uniformly from each talk;
/// everything else goes to train. Each split keeps corpus order.
pub fn make_splits(
    corpus: &[ParallelExample],
    per_talk_dev: usize,
    per_talk_test: usize,
    seed: u64,
) -> Result<Splits> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = per_talk_dev + per_talk_test + 1;
    // 0 = train, 1 = dev, 2 = test
    let mut assign = vec![0u8; corpus.len()];
    for (talk, idx) in by_talk(corpus) {
        if idx.len() < need {
            return Err(Error::TalkTooSmall {
                talk: talk.to_owned(),
                have: idx.len(),
                need,
            });
        }
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..per_talk_dev] {
            assign[i] = 1;
        }
        for &i in &shuffled[per_talk_dev..per_talk_dev + per_talk_test] {
            assign[i] = 2;
        }
    }
    let mut splits = Splits::default();
    for (ex, a) in corpus.iter().zip(assign) {
        match a {
            1 => splits.dev.push(ex.clone()),
            2 => splits.test.push(ex.clone()),
            _ => splits.train.push(ex.clone()),
        }
    }
    Ok(splits)
}

/// Corpus statistics in the layout of a dataset summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub talks: usize,
    pub speakers: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub avg_sentences_per_talk: f64,
    pub std_sentences_per_talk: f64,
}

pub fn corpus_stats(splits: &Splits) -> CorpusStats {
    let all: Vec<&ParallelExample> = splits
        .train
        .iter()
        .chain(&splits.dev)
        .chain(&splits.test)
        .collect();
    let mut per_talk: BTreeMap<&str, usize> = BTreeMap::new();
    let mut speakers = std::collections::BTreeSet::new();
    for ex in &all {
        *per_talk.entry(ex.talk.as_str()).or_default() += 1;
        speakers.insert(ex.speaker.as_str());
    }
    let n = per_talk.len().max(1) as f64;
    let mean = all.len() as f64 / n;
    let var = per_talk
        .values()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    CorpusStats {
        talks: per_talk.len(),
        speakers: speakers.len(),
        train: splits.train.len(),
        dev: splits.dev.len(),
        test: splits.test.len(),
        avg_sentences_per_talk: mean,
        std_sentences_per_talk: var.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(talks: &[(&str, usize)]) -> Vec<ParallelExample> {
        let mut out = Vec::new();
        for &(t, n) in talks {
            for i in 0..n {
                out.push(ParallelExample {
                    talk: t.into(),
                    speaker: format!("spk-{t}"),
                    src: vec![format!("s{i}")],
                    trg: vec![format!("t{i}")],
                });
            }
        }
        out
    }

    #[test]
    fn filter_threshold() {
        let c = corpus(&[("a", 9), ("b", 10)]);
        let f = filter_talks(&c, MIN_TALK_SENTENCES);
        assert_eq!(f.len(), 10);
        assert!(f.iter().all(|e| e.talk == "b"));
        assert!(filter_talks(&[], 10).is_empty());
    }

    #[test]
    fn splits_take_two_per_talk() {
        let c = corpus(&[("a", 10), ("b", 14), ("c", 25)]);
        let s = make_splits(&c, 2, 2, 1).unwrap();
        assert_eq!(s.dev.len(), 6);
        assert_eq!(s.test.len(), 6);
        assert_eq!(s.train.len(), 49 - 12);
        for t in ["a", "b", "c"] {
            for split in [&s.train, &s.dev, &s.test] {
                assert!(split.iter().any(|e| e.talk == t));
            }
        }
        assert_eq!(s, make_splits(&c, 2, 2, 1).unwrap());
    }

    #[test]
    fn small_talk_is_named_in_error() {
        let c = corpus(&[("tiny", 4)]);
        let e = make_splits(&c, 2, 2, 0).unwrap_err();
        assert!(e.to_string().contains("tiny"));
    }

    #[test]
    fn thousands_of_talks_give_expected_split_sizes() {
        let talks: Vec<(String, usize)> = (0..1887).map(|i| (format!("talk{i}"), 10 + i % 7)).collect();
        let refs: Vec<(&str, usize)> = talks.iter().map(|(t, n)| (t.as_str(), *n)).collect();
        let c = corpus(&refs);
        let s = make_splits(&c, 2, 2, 3).unwrap();
        assert_eq!(s.dev.len(), 3774);
        assert_eq!(s.test.len(), 3774);
    }
}
