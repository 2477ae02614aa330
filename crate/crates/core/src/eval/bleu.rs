use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of one sentence pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// 0 to 100.
    pub bleu: f64,
    /// `None` for orders with no hypothesis n-grams anywhere in the corpus.
    pub precisions: Vec<Option<f64>>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub smoothed: bool,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

pub fn sentence_stats<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> BleuStats {
    let mut s = BleuStats {
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        s.matches[n - 1] = h
            .iter()
            .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

/// Unsmoothed corpus BLEU-4 from aggregated statistics. Orders with zero
/// hypothesis n-grams are left out of the geometric mean; any included order
/// with zero matches gives 0.
pub fn bleu_from_stats(s: &BleuStats) -> BleuReport {
    score(s, false)
}

/// Add-one smoothing on orders 2..4 (numerator and denominator). Intended
/// only for single sentences or very small samples.
pub fn smoothed_bleu_from_stats(s: &BleuStats) -> BleuReport {
    score(s, true)
}

fn score(s: &BleuStats, smoothed: bool) -> BleuReport {
    let precisions: Vec<Option<f64>> = (0..MAX_ORDER)
        .map(|n| {
            let (m, t) = (s.matches[n] as f64, s.totals[n] as f64);
            if smoothed && n > 0 {
                Some((m + 1.0) / (t + 1.0))
            } else if s.totals[n] == 0 {
                None
            } else {
                Some(m / t)
            }
        })
        .collect();
    let bp = if s.hyp_len == 0 {
        0.0
    } else if s.hyp_len < s.ref_len {
        (1.0 - s.ref_len as f64 / s.hyp_len as f64).exp()
    } else {
        1.0
    };
    let used: Vec<f64> = precisions.iter().flatten().copied().collect();
    let bleu = if used.is_empty() || used.contains(&0.0) || bp == 0.0 {
        0.0
    } else {
        let mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
        100.0 * bp * mean.exp()
    };
    BleuReport {
        bleu,
        precisions,
        brevity_penalty: bp,
        hyp_len: s.hyp_len,
        ref_len: s.ref_len,
        smoothed,
    }
}

pub fn corpus_stats<T: Eq + Hash, S: AsRef<[T]>>(hyps: &[S], refs: &[S]) -> Result<Vec<BleuStats>> {
    if hyps.len() != refs.len() {
        return Err(Error::Shape {
            op: "corpus_bleu",
            left: vec![hyps.len()],
            right: vec![refs.len()],
        });
    }
    if hyps.is_empty() {
        return Err(Error::Empty("corpus_bleu"));
    }
    Ok(hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref()))
        .collect())
}

pub fn corpus_bleu<T: Eq + Hash, S: AsRef<[T]>>(hyps: &[S], refs: &[S]) -> Result<BleuReport> {
    let mut total = BleuStats::default();
    for s in corpus_stats(hyps, refs)? {
        total += s;
    }
    Ok(bleu_from_stats(&total))
}

pub fn sentence_bleu_smoothed<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> BleuReport {
    smoothed_bleu_from_stats(&sentence_stats(hyp, reference))
}
