use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::corpus::ParallelExample;
use super::vocab::{SpeakerTable, Vocabulary};

pub const BATCH_SIZE: usize = 32;

/// A sentence pair mapped to ids. `speaker` is `None` when the speaker is not
/// in the table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub src: Vec<usize>,
    pub trg: Vec<usize>,
    pub speaker: Option<usize>,
}

pub fn encode_corpus(
    corpus: &[ParallelExample],
    src_vocab: &Vocabulary,
    trg_vocab: &Vocabulary,
    speakers: &SpeakerTable,
) -> Vec<EncodedExample> {
    corpus
        .iter()
        .map(|ex| EncodedExample {
            src: src_vocab.encode(&ex.src),
            trg: trg_vocab.encode(&ex.trg),
            speaker: speakers.index(&ex.speaker),
        })
        .collect()
}

/// Indices of examples that all share one source length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub src_len: usize,
    pub indices: Vec<usize>,
}

/// Groups examples by exact source length, chunks each group into batches of at
/// most `batch_size`, and shuffles example and batch order with `rng`.
pub fn make_batches(
    examples: &[EncodedExample],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Vec<Batch> {
    assert!(batch_size >= 1);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        groups.entry(ex.src.len()).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (len, mut idx) in groups {
        idx.shuffle(rng);
        for chunk in idx.chunks(batch_size) {
            batches.push(Batch {
                src_len: len,
                indices: chunk.to_vec(),
            });
        }
    }
    batches.shuffle(rng);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex(len: usize) -> EncodedExample {
        EncodedExample {
            src: vec![5; len],
            trg: vec![6],
            speaker: Some(0),
        }
    }

    #[test]
    fn chunks_to_batch_size() {
        let data: Vec<_> = (0..33).map(|_| ex(7)).collect();
        let b = make_batches(&data, 32, &mut ChaCha8Rng::seed_from_u64(0));
        let mut sizes: Vec<usize> = b.iter().map(|b| b.indices.len()).collect();
        sizes.sort();
        assert_eq!(sizes, [1, 32]);
    }

    #[test]
    fn never_mixes_lengths_and_partitions() {
        let data: Vec<_> = (0..50).map(|i| ex(5 + i % 2)).collect();
        let b = make_batches(&data, 32, &mut ChaCha8Rng::seed_from_u64(1));
        let mut seen = vec![false; data.len()];
        for batch in &b {
            assert!(batch.indices.len() <= 32);
            for &i in &batch.indices {
                assert_eq!(data[i].src.len(), batch.src_len);
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
