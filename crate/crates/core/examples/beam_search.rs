//! Beam search versus greedy decoding on a hand-built scorer where the
//! locally best first token leads nowhere.

use speaker_nmt::data::EOS;
use speaker_nmt::decode::{beam_search, greedy, rescore, Scorer};

/// Tokens: 0 = `<unk>`-like filler, EOS = 2, and the words 4 ("a") and 5 ("b").
/// After "a" every continuation is mediocre; after "b" EOS is nearly certain.
struct Garden;

const V: usize = 6;

fn dist(pairs: &[(usize, f64)]) -> Vec<f64> {
    let mut p = vec![1e-6; V];
    for &(t, x) in pairs {
        p[t] = x;
    }
    let z: f64 = p.iter().sum();
    p.iter().map(|x| (x / z).ln()).collect()
}

impl Scorer for Garden {
    type State = Vec<usize>;

    fn vocab_size(&self) -> usize {
        V
    }

    fn initial(&self) -> speaker_nmt::Result<(Vec<usize>, Vec<f64>)> {
        Ok((vec![], dist(&[(4, 0.55), (5, 0.45)])))
    }

    fn advance(&self, prefix: &Vec<usize>, t: usize) -> speaker_nmt::Result<(Vec<usize>, Vec<f64>)> {
        let mut p = prefix.clone();
        p.push(t);
        let next = match p.as_slice() {
            [4] => dist(&[(4, 0.34), (5, 0.33), (EOS, 0.33)]),
            [5] => dist(&[(EOS, 0.95), (4, 0.05)]),
            _ => dist(&[(EOS, 0.5), (4, 0.25), (5, 0.25)]),
        };
        Ok((p, next))
    }

    fn excluded(&self, t: usize) -> bool {
        t == 1 || t == 3
    }
}

fn main() -> speaker_nmt::Result<()> {
    let g = greedy(&Garden, 6)?;
    println!("greedy   {:?} log p {:.4}", g.tokens, g.log_prob);
    for beam in [1, 2, 5] {
        let h = beam_search(&Garden, beam, 6)?;
        println!(
            "beam {beam:<3} {:?} log p {:.4} (rescored {:.4})",
            h.tokens,
            h.log_prob,
            rescore(&Garden, &h.tokens)?
        );
    }
    Ok(())
}
