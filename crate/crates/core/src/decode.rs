//! Beam search and greedy decoding over any left-to-right scorer.

use std::cell::RefCell;
use std::cmp::Ordering;

use crate::autodiff::Tape;
use crate::data::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{DecodeContext, DecoderState, Seq2Seq};
use crate::tensor::Real;

/// A left-to-right distribution over next tokens.
pub trait Scorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// State and log-probabilities for the first emitted token.
    fn initial(&self) -> Result<(Self::State, Vec<f64>)>;

    /// Feeds `token` and returns the next state and log-probabilities.
    fn advance(&self, state: &Self::State, token: usize) -> Result<(Self::State, Vec<f64>)>;

    /// Tokens that may never be emitted.
    fn excluded(&self, _token: usize) -> bool {
        false
    }

    fn eos(&self) -> usize {
        EOS
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, ending with EOS when `finished`.
    pub tokens: Vec<usize>,
    /// Sum of the chosen tokens' log-probabilities.
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens without the trailing EOS.
    pub fn words(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((_, rest)) if self.finished => rest,
            _ => &self.tokens,
        }
    }
}

pub fn default_max_len(src_len: usize) -> usize {
    2 * src_len + 10
}

struct Live<S> {
    tokens: Vec<usize>,
    score: f64,
    state: S,
    log_probs: Vec<f64>,
}

/// Higher score first, then lower token id, then earlier hypothesis.
fn rank(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Standard beam search without length normalization. Hypotheses that emit
/// EOS retire and free their slot; search ends when `beam` hypotheses have
/// finished, none are live, or `max_len` tokens have been emitted. Returns the
/// best finished hypothesis, or the best unfinished one if none finished.
pub fn beam_search<S: Scorer>(scorer: &S, beam: usize, max_len: usize) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let v = scorer.vocab_size();
    let eos = scorer.eos();
    let (state, log_probs) = scorer.initial()?;
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        state,
        log_probs,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let k = beam - finished.len();
        if k == 0 || live.is_empty() {
            break;
        }
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (hi, h) in live.iter().enumerate() {
            let mut own: Vec<(f64, usize, usize)> = (0..v)
                .filter(|&t| !scorer.excluded(t))
                .map(|t| (h.score + h.log_probs[t], t, hi))
                .filter(|c| c.0 > f64::NEG_INFINITY)
                .collect();
            if own.len() > k {
                own.select_nth_unstable_by(k - 1, rank);
                own.truncate(k);
            }
            cands.extend(own);
        }
        cands.sort_by(rank);
        cands.truncate(k);
        let mut next = Vec::with_capacity(k);
        for (score, tok, hi) in cands {
            let h = &live[hi];
            let mut tokens = h.tokens.clone();
            tokens.push(tok);
            if tok == eos {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: score,
                    finished: true,
                });
            } else {
                let (state, log_probs) = scorer.advance(&h.state, tok)?;
                next.push(Live {
                    tokens,
                    score,
                    state,
                    log_probs,
                });
            }
        }
        live = next;
    }
    let pick = |hs: Vec<Hypothesis>| {
        hs.into_iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| b.log_prob.total_cmp(&a.log_prob).then(i.cmp(j)))
            .map(|(_, h)| h)
    };
    if let Some(best) = pick(finished) {
        return Ok(best);
    }
    let unfinished = live
        .into_iter()
        .map(|h| Hypothesis {
            tokens: h.tokens,
            log_prob: h.score,
            finished: false,
        })
        .collect();
    pick(unfinished).ok_or(Error::Empty("beam search produced no hypothesis"))
}

/// Stepwise argmax (lowest id on ties) until EOS or `max_len`.
pub fn greedy<S: Scorer>(scorer: &S, max_len: usize) -> Result<Hypothesis> {
    let (mut state, mut lp) = scorer.initial()?;
    let mut tokens = Vec::new();
    let mut score = 0.0;
    for _ in 0..max_len {
        let mut best: Option<usize> = None;
        for t in (0..scorer.vocab_size()).filter(|&t| !scorer.excluded(t)) {
            if best.is_none_or(|b| lp[t] > lp[b]) {
                best = Some(t);
            }
        }
        let Some(t) = best else { break };
        score += lp[t];
        tokens.push(t);
        if t == scorer.eos() {
            return Ok(Hypothesis {
                tokens,
                log_prob: score,
                finished: true,
            });
        }
        (state, lp) = scorer.advance(&state, t)?;
    }
    Ok(Hypothesis {
        tokens,
        log_prob: score,
        finished: false,
    })
}

/// Log-probability of a fixed token sequence under `scorer`.
pub fn rescore<S: Scorer>(scorer: &S, tokens: &[usize]) -> Result<f64> {
    let (mut state, mut lp) = scorer.initial()?;
    let mut total = 0.0;
    for (i, &t) in tokens.iter().enumerate() {
        total += lp.get(t).copied().ok_or(Error::Index {
            op: "rescore",
            index: t,
            len: lp.len(),
        })?;
        if i + 1 < tokens.len() {
            (state, lp) = scorer.advance(&state, t)?;
        }
    }
    Ok(total)
}

/// Scores continuations of one source sentence with a translation model.
pub struct ModelScorer<'m, R: Real> {
    model: &'m Seq2Seq<R>,
    tape: RefCell<Tape<'m, R>>,
    ctx: DecodeContext,
    first: (DecoderState, usize),
}

impl<'m, R: Real> ModelScorer<'m, R> {
    pub fn new(model: &'m Seq2Seq<R>, src: &[usize], speaker: Option<usize>) -> Result<Self> {
        let mut tape = Tape::new(&model.params);
        let (ctx, state) = model.start(&mut tape, src, speaker, None)?;
        let first = model.first_input(ctx.speaker);
        Ok(Self {
            model,
            tape: RefCell::new(tape),
            ctx,
            first: (state, first),
        })
    }

    /// True when the speaker was unknown and the zero-bias fallback applied.
    pub fn speaker_fallback(&self) -> bool {
        self.ctx.speaker.fallback
    }

    fn step(&self, state: DecoderState, input: usize) -> Result<(DecoderState, Vec<f64>)> {
        let mut tape = self.tape.borrow_mut();
        let out = self.model.decode_step(&mut tape, &self.ctx, input, state, None)?;
        let lp = tape.value(out.log_probs).iter().map(|x| x.f64()).collect();
        Ok((out.state, lp))
    }
}

impl<R: Real> Scorer for ModelScorer<'_, R> {
    type State = DecoderState;

    fn vocab_size(&self) -> usize {
        self.model.config.output_vocab()
    }

    fn initial(&self) -> Result<(DecoderState, Vec<f64>)> {
        self.step(self.first.0, self.first.1)
    }

    fn advance(&self, state: &DecoderState, token: usize) -> Result<(DecoderState, Vec<f64>)> {
        self.step(*state, token)
    }

    fn excluded(&self, token: usize) -> bool {
        token == PAD || token == BOS || self.model.config.is_speaker_token(token)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    pub hypothesis: Hypothesis,
    pub speaker_fallback: bool,
}

/// Beam-search translation of one source sentence (`max_len` defaults to `2|src| + 10`).
pub fn translate<R: Real>(
    model: &Seq2Seq<R>,
    src: &[usize],
    speaker: Option<usize>,
    beam: usize,
    max_len: Option<usize>,
) -> Result<Translation> {
    if src.is_empty() {
        return Err(Error::Empty("translate: source"));
    }
    let scorer = ModelScorer::new(model, src, speaker)?;
    let hypothesis = beam_search(&scorer, beam, max_len.unwrap_or(default_max_len(src.len())))?;
    Ok(Translation {
        hypothesis,
        speaker_fallback: scorer.speaker_fallback(),
    })
}
