use std::hash::Hash;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::bleu::{bleu_from_stats, corpus_stats, BleuStats};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Fraction of resamples on which A did not score strictly higher than B.
    pub p_value: f64,
    pub resamples: usize,
    pub bleu_a: f64,
    pub bleu_b: f64,
}

impl BootstrapResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }
}

/// Paired bootstrap test of "system A is better than system B" on corpus BLEU.
/// Each resample draws sentence indices with replacement and scores both
/// systems on the same draw; ties count as A not being better.
pub fn paired_bootstrap<T: Eq + Hash, S: AsRef<[T]>>(
    hyp_a: &[S],
    hyp_b: &[S],
    refs: &[S],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if resamples < 100 {
        return Err(Error::Config(format!("need at least 100 resamples, got {resamples}")));
    }
    if hyp_a.len() != hyp_b.len() {
        return Err(Error::Shape {
            op: "paired_bootstrap",
            left: vec![hyp_a.len()],
            right: vec![hyp_b.len()],
        });
    }
    let sa = corpus_stats(hyp_a, refs)?;
    let sb = corpus_stats(hyp_b, refs)?;
    let total = |s: &[BleuStats]| {
        let mut t = BleuStats::default();
        s.iter().for_each(|&x| t += x);
        bleu_from_stats(&t).bleu
    };
    let n = sa.len();
    let mut r = rng::derived(seed, "bootstrap");
    let mut not_better = 0usize;
    for _ in 0..resamples {
        let (mut ta, mut tb) = (BleuStats::default(), BleuStats::default());
        for _ in 0..n {
            let i = r.random_range(0..n);
            ta += sa[i];
            tb += sb[i];
        }
        if bleu_from_stats(&ta).bleu <= bleu_from_stats(&tb).bleu {
            not_better += 1;
        }
    }
    Ok(BootstrapResult {
        p_value: not_better as f64 / resamples as f64,
        resamples,
        bleu_a: total(&sa),
        bleu_b: total(&sb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn corpus(n: usize, seed: u64) -> Vec<Vec<u32>> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| (0..r.random_range(5..12)).map(|_| r.random_range(0..40)).collect())
            .collect()
    }

    #[test]
    fn self_comparison_never_wins() {
        let refs = corpus(50, 1);
        let hyp = corpus(50, 2);
        let res = paired_bootstrap(&hyp, &hyp, &refs, 200, 0).unwrap();
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn references_beat_garbage() {
        let refs = corpus(200, 3);
        let mut garbage = refs.clone();
        garbage.shuffle(&mut rng::seeded(4));
        let res = paired_bootstrap(&refs, &garbage, &refs, 1000, 7).unwrap();
        assert!(res.p_value < 0.01);
        assert!(res.significant());
    }

    #[test]
    fn deterministic_and_validated() {
        let refs = corpus(30, 5);
        let a = corpus(30, 6);
        let b = corpus(30, 7);
        let x = paired_bootstrap(&a, &b, &refs, 300, 11).unwrap();
        let y = paired_bootstrap(&a, &b, &refs, 300, 11).unwrap();
        assert_eq!(x, y);
        assert!(paired_bootstrap(&a, &b, &refs, 50, 11).is_err());
        assert!(paired_bootstrap(&a, &b[..29], &refs, 100, 11).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn both_directions_cover_the_unit_interval(s in 0u64..1000) {
            let refs = corpus(15, s);
            let a = corpus(15, s + 1);
            let mut b = refs.clone();
            b.iter_mut().step_by(2).for_each(|x| x.reverse());
            let ab = paired_bootstrap(&a, &b, &refs, 100, s).unwrap();
            let ba = paired_bootstrap(&b, &a, &refs, 100, s).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
            prop_assert!(ab.p_value + ba.p_value >= 1.0);
        }
    }
}
