//! Building blocks of the encoder–decoder: embeddings, an LSTM cell with
//! variational dropout, MLP attention, word dropout, and label smoothing.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `N(0, std)` initialization.
pub fn normal_init<R: Real>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<R> {
    let dist = Normal::new(0.0, std).expect("std is finite and non-negative");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| R::of(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Glorot/Xavier uniform initialization for a `[fan_out × fan_in]` matrix.
pub fn glorot_init<R: Real>(fan_out: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor<R> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    let data = (0..fan_out * fan_in)
        .map(|_| R::of(dist.sample(rng)))
        .collect();
    Tensor::matrix(fan_out, fan_in, data).expect("shape matches")
}

/// Looks up one row per id. Gradients flow only to the rows that were read.
pub fn embed<R: Real>(tape: &mut Tape<R>, table: ParamId, ids: &[usize]) -> Result<Vec<Var>> {
    ids.iter().map(|&id| tape.row_of(table, id)).collect()
}

/// An inverted-dropout mask: entries are `0` or `1/(1-rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<R> {
    pub values: Vec<R>,
}

impl<R: Real> DropoutMask<R> {
    pub fn ones(n: usize) -> Self {
        Self {
            values: vec![R::one(); n],
        }
    }

    pub fn sample(n: usize, rate: f64, rng: &mut impl Rng) -> Self {
        if rate <= 0.0 {
            return Self::ones(n);
        }
        let keep = R::of(1.0 / (1.0 - rate));
        let values = (0..n)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    R::zero()
                } else {
                    keep
                }
            })
            .collect();
        Self { values }
    }

    pub fn is_identity(&self) -> bool {
        self.values.iter().all(|&v| v == R::one())
    }
}

/// Applies `mask` to `x` unless the mask is all ones.
pub fn apply_mask<R: Real>(tape: &mut Tape<R>, x: Var, mask: Option<Var>) -> Result<Var> {
    match mask {
        Some(m) => tape.mul(x, m),
        None => Ok(x),
    }
}

#[derive(Clone, Debug)]
pub struct LstmParams {
    /// `[4·d_h × (d_in + d_h)]`, gate order input, forget, output, candidate.
    pub weight: ParamId,
    /// `[4·d_h]`
    pub bias: ParamId,
    pub d_in: usize,
    pub d_h: usize,
}

impl LstmParams {
    pub fn create<R: Real>(
        store: &mut ParamStore<R>,
        name: &str,
        d_in: usize,
        d_h: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot_init(4 * d_h, d_in + d_h, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[4 * d_h]));
        Self {
            weight,
            bias,
            d_in,
            d_h,
        }
    }

    pub fn num_params(d_in: usize, d_h: usize) -> usize {
        4 * d_h * (d_in + d_h) + 4 * d_h
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros<R: Real>(tape: &mut Tape<R>, d_h: usize) -> Self {
        let h = tape.constant_vec(vec![R::zero(); d_h]);
        Self { h, c: h }
    }
}

/// Variational dropout masks for one sequence. The same tape nodes are reused
/// at every timestep, so the mask is identical across the sequence.
#[derive(Clone, Copy, Debug, Default)]
pub struct LstmMasks {
    pub input: Option<Var>,
    pub hidden: Option<Var>,
}

impl LstmMasks {
    pub fn sample<R: Real>(
        tape: &mut Tape<R>,
        p: &LstmParams,
        rate: f64,
        rng: &mut impl Rng,
    ) -> Self {
        if rate <= 0.0 {
            return Self::default();
        }
        let input = DropoutMask::<R>::sample(p.d_in, rate, rng);
        let hidden = DropoutMask::<R>::sample(p.d_h, rate, rng);
        Self {
            input: Some(tape.constant_vec(input.values)),
            hidden: Some(tape.constant_vec(hidden.values)),
        }
    }
}

pub fn lstm_step<R: Real>(
    tape: &mut Tape<R>,
    p: &LstmParams,
    x: Var,
    state: LstmState,
    masks: LstmMasks,
) -> Result<LstmState> {
    if tape.shape(x) != [p.d_in] || tape.shape(state.h) != [p.d_h] || tape.shape(state.c) != [p.d_h]
    {
        return Err(Error::Shape {
            op: "lstm_step",
            left: tape.shape(x).to_vec(),
            right: vec![p.d_in, p.d_h],
        });
    }
    let d = p.d_h;
    let x = apply_mask(tape, x, masks.input)?;
    let h = apply_mask(tape, state.h, masks.hidden)?;
    let xh = tape.concat(&[x, h])?;
    let w = tape.param(p.weight);
    let b = tape.param(p.bias);
    let z = tape.affine(xh, w, b)?;
    let zi = tape.slice(z, 0, d)?;
    let zf = tape.slice(z, d, d)?;
    let zo = tape.slice(z, 2 * d, d)?;
    let zg = tape.slice(z, 3 * d, d)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Runs the cell over `inputs` from a zero state, returning every hidden state.
pub fn lstm_sequence<R: Real>(
    tape: &mut Tape<R>,
    p: &LstmParams,
    inputs: &[Var],
    masks: LstmMasks,
) -> Result<Vec<Var>> {
    let mut state = LstmState::zeros(tape, p.d_h);
    let mut out = Vec::with_capacity(inputs.len());
    for &x in inputs {
        state = lstm_step(tape, p, x, state, masks)?;
        out.push(state.h);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AttentionParams {
    /// `V_a`, `[d_a]`
    pub v: ParamId,
    /// `W_a`, `[d_a × d_enc]`
    pub w_enc: ParamId,
    /// `W_ah`, `[d_a × d_h]`
    pub w_query: ParamId,
    /// `b_a`, `[d_a]`
    pub bias: ParamId,
    pub d_a: usize,
}

impl AttentionParams {
    pub fn create<R: Real>(
        store: &mut ParamStore<R>,
        d_enc: usize,
        d_query: usize,
        d_a: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let v = store.add("attention.v", {
            let m: Tensor<R> = glorot_init(1, d_a, rng);
            Tensor::vector(m.into_data())
        });
        let w_enc = store.add("attention.w_enc", glorot_init(d_a, d_enc, rng));
        let w_query = store.add("attention.w_query", glorot_init(d_a, d_query, rng));
        let bias = store.add("attention.bias", Tensor::zeros(&[d_a]));
        Self {
            v,
            w_enc,
            w_query,
            bias,
            d_a,
        }
    }

    pub fn num_params(d_enc: usize, d_query: usize, d_a: usize) -> usize {
        d_a + d_a * d_enc + d_a * d_query + d_a
    }
}

/// Encodings and their query-independent projection `W_a x_i + b_a`, computed
/// once per source sentence.
#[derive(Clone, Copy, Debug)]
pub struct AttentionMemory {
    pub encodings: Var,
    pub projected: Var,
}

impl AttentionMemory {
    pub fn new<R: Real>(tape: &mut Tape<R>, p: &AttentionParams, encodings: Var) -> Result<Self> {
        let w = tape.param(p.w_enc);
        let wt = tape.transpose(w)?;
        let proj = tape.matmul(encodings, wt)?;
        let b = tape.param(p.bias);
        let projected = tape.add_row_broadcast(proj, b)?;
        Ok(Self {
            encodings,
            projected,
        })
    }

    pub fn len<R: Real>(&self, tape: &Tape<R>) -> usize {
        tape.shape(self.encodings)[0]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionResult {
    pub context: Var,
    pub weights: Var,
}

/// `α = softmax_i(V_aᵀ tanh(W_a x_i + W_ah h + b_a))`, `c = Σ_i α_i x_i`.
pub fn attend<R: Real>(
    tape: &mut Tape<R>,
    p: &AttentionParams,
    query: Var,
    memory: &AttentionMemory,
) -> Result<AttentionResult> {
    let wq = tape.param(p.w_query);
    let q = tape.matvec(wq, query)?;
    let pre = tape.add_row_broadcast(memory.projected, q)?;
    let act = tape.tanh(pre);
    let v = tape.param(p.v);
    let scores = tape.matvec(act, v)?;
    let weights = tape.softmax(scores)?;
    let context = tape.matvec_t(memory.encodings, weights)?;
    Ok(AttentionResult { context, weights })
}

/// Convenience wrapper over a list of encoding vectors.
pub fn attend_over<R: Real>(
    tape: &mut Tape<R>,
    p: &AttentionParams,
    query: Var,
    encodings: &[Var],
) -> Result<AttentionResult> {
    if encodings.is_empty() {
        return Err(Error::Empty("attend"));
    }
    let enc = tape.stack_rows(encodings)?;
    let memory = AttentionMemory::new(tape, p, enc)?;
    attend(tape, p, query, &memory)
}

/// Replaces each eligible id with `unk` independently with probability `p`.
/// `eligible[i] == false` protects position `i` (BOS, forced speaker tokens).
pub fn word_dropout(
    ids: &[usize],
    eligible: &[bool],
    p: f64,
    unk: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    if p <= 0.0 {
        return ids.to_vec();
    }
    ids.iter()
        .zip(eligible)
        .map(|(&id, &ok)| {
            if ok && rng.random::<f64>() < p {
                unk
            } else {
                id
            }
        })
        .collect()
}

/// `−[(1−eps)·lp[gold] + eps/|V'|·Σ_{v∈V'} lp[v]]` with `V'` the vocabulary minus `pad`.
pub fn label_smoothed_nll<R: Real>(
    tape: &mut Tape<R>,
    log_probs: Var,
    gold: usize,
    eps: f64,
    pad: Option<usize>,
) -> Result<Var> {
    tape.smoothed_nll(log_probs, gold, eps, pad)
}
