//! Bidirectional LSTM encoder, MLP attention, LSTM decoder with a tied output
//! layer, and the speaker-conditioned softmax variants.

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::data::{EncodedExample, BOS, EOS, PAD, UNK};
use crate::error::{Error, Result};
use crate::nn::{
    apply_mask, attend, glorot_init, label_smoothed_nll, lstm_step, normal_init, word_dropout,
    AttentionMemory, AttentionParams, DropoutMask, LstmMasks, LstmParams, LstmState,
};
use crate::rng::{self, Rng};
use crate::tensor::{Real, Tensor};

use super::config::{AdaptationMode, ModelConfig, UnknownSpeakerPolicy};

/// Speaker-specific output bias parameters.
#[derive(Clone, Debug)]
pub enum SpeakerBiasParams {
    None,
    /// `B`, `[|S| × |V_T|]`, row `s` is the bias of speaker `s`.
    Full { table: ParamId },
    /// `S`, `[|S| × r]` and `B̃`, `[r × |V_T|]`.
    Factored { weights: ParamId, centroids: ParamId },
}

#[derive(Clone, Debug)]
pub struct ModelLayout {
    pub src_embed: ParamId,
    /// Shared between the decoder input embedding and the softmax weights.
    pub trg_embed: ParamId,
    pub encoder_fw: LstmParams,
    pub encoder_bw: LstmParams,
    pub decoder: LstmParams,
    pub attention: AttentionParams,
    pub w_oh: ParamId,
    pub w_oc: ParamId,
    pub w_ow: ParamId,
    pub b_o: ParamId,
    pub b_t: ParamId,
    pub speaker: SpeakerBiasParams,
}

#[derive(Clone, Debug)]
pub struct Seq2Seq<R: Real> {
    pub config: ModelConfig,
    pub params: ParamStore<R>,
    pub layout: ModelLayout,
}

/// Decoder recurrent state plus the previous attention context.
#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub lstm: LstmState,
    pub context: Var,
}

/// Per-sentence decoding context: encoder memory, per-sequence dropout masks,
/// and the resolved speaker bias.
#[derive(Clone, Copy, Debug)]
pub struct DecodeContext {
    pub memory: AttentionMemory,
    pub masks: LstmMasks,
    pub bias: Option<Var>,
    pub speaker: ResolvedSpeaker,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedSpeaker {
    pub index: Option<usize>,
    /// Set when the speaker was unknown and the zero-bias fallback was used.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub output: Var,
    pub log_probs: Var,
    pub state: DecoderState,
}

impl<R: Real> Seq2Seq<R> {
    /// Embeddings `N(0, 1/√d_emb)`, other matrices Glorot uniform, biases zero.
    /// Full speaker biases start at zero; factored ones start with
    /// `S ~ N(0, 1/√r)` and `B̃ = 0`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::derived(seed, "init");
        let rng = &mut rng;
        let c = &config;
        let mut p = ParamStore::new();
        let emb_std = 1.0 / (c.d_emb as f64).sqrt();
        let d_enc = 2 * c.d_hidden;
        let v_out = c.output_vocab();

        let src_embed = p.add("embed.src", normal_init(&[c.src_vocab, c.d_emb], emb_std, rng));
        let trg_embed = p.add("embed.trg", normal_init(&[v_out, c.d_emb], emb_std, rng));
        let encoder_fw = LstmParams::create(&mut p, "encoder.fw", c.d_emb, c.d_hidden, rng);
        let encoder_bw = LstmParams::create(&mut p, "encoder.bw", c.d_emb, c.d_hidden, rng);
        let decoder = LstmParams::create(&mut p, "decoder", c.d_emb + d_enc, c.d_hidden, rng);
        let attention = AttentionParams::create(&mut p, d_enc, c.d_hidden, c.d_attn, rng);
        let w_oh = p.add("output.w_oh", glorot_init(c.d_emb, c.d_hidden, rng));
        let w_oc = p.add("output.w_oc", glorot_init(c.d_emb, d_enc, rng));
        let w_ow = p.add("output.w_ow", glorot_init(c.d_emb, c.d_emb, rng));
        let b_o = p.add("output.b_o", Tensor::zeros(&[c.d_emb]));
        let b_t = p.add("output.b_t", Tensor::zeros(&[v_out]));
        let speaker = match c.mode {
            AdaptationMode::Base | AdaptationMode::SpkToken => SpeakerBiasParams::None,
            AdaptationMode::FullBias => SpeakerBiasParams::Full {
                table: p.add("speaker.bias", Tensor::zeros(&[c.num_speakers, v_out])),
            },
            AdaptationMode::FactBias => {
                let std = 1.0 / (c.rank as f64).sqrt();
                SpeakerBiasParams::Factored {
                    weights: p.add(
                        "speaker.weights",
                        normal_init(&[c.num_speakers, c.rank], std, rng),
                    ),
                    centroids: p.add("speaker.centroids", Tensor::zeros(&[c.rank, v_out])),
                }
            }
        };
        let layout = ModelLayout {
            src_embed,
            trg_embed,
            encoder_fw,
            encoder_bw,
            decoder,
            attention,
            w_oh,
            w_oc,
            w_ow,
            b_o,
            b_t,
            speaker,
        };
        Ok(Self {
            config,
            params: p,
            layout,
        })
    }

    pub fn mode(&self) -> AdaptationMode {
        self.config.mode
    }

    pub fn cast<S: Real>(&self) -> Seq2Seq<S> {
        Seq2Seq {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Maps a speaker annotation to an index under the unknown-speaker policy.
    pub fn resolve_speaker(&self, speaker: Option<usize>) -> Result<ResolvedSpeaker> {
        if !self.config.mode.uses_speaker() {
            return Ok(ResolvedSpeaker {
                index: None,
                fallback: false,
            });
        }
        match speaker {
            Some(s) if s < self.config.num_speakers => Ok(ResolvedSpeaker {
                index: Some(s),
                fallback: false,
            }),
            other => match self.config.unknown_speaker {
                UnknownSpeakerPolicy::Error => Err(Error::UnknownSpeaker(match other {
                    Some(s) => format!("#{s}"),
                    None => "<missing>".into(),
                })),
                UnknownSpeakerPolicy::ZeroBias => Ok(ResolvedSpeaker {
                    index: None,
                    fallback: true,
                }),
            },
        }
    }

    /// Speaker bias over the output vocabulary; `None` stands for the zero vector.
    pub fn speaker_bias(&self, tape: &mut Tape<'_, R>, speaker: usize) -> Result<Option<Var>> {
        let check = |n: usize| {
            if speaker >= n {
                Err(Error::Index {
                    op: "speaker_bias",
                    index: speaker,
                    len: n,
                })
            } else {
                Ok(())
            }
        };
        match self.layout.speaker {
            SpeakerBiasParams::None => Ok(None),
            SpeakerBiasParams::Full { table } => {
                check(self.config.num_speakers)?;
                Ok(Some(tape.row_of(table, speaker)?))
            }
            SpeakerBiasParams::Factored { weights, centroids } => {
                check(self.config.num_speakers)?;
                let s = tape.row_of(weights, speaker)?;
                let b = tape.param(centroids);
                Ok(Some(tape.matvec_t(b, s)?))
            }
        }
    }

    /// Eager speaker bias values (zeros for modes without a bias).
    pub fn speaker_bias_values(&self, speaker: usize) -> Result<Vec<R>> {
        let mut tape = Tape::new(&self.params);
        match self.speaker_bias(&mut tape, speaker)? {
            Some(v) => Ok(tape.value(v).to_vec()),
            None => Ok(vec![R::zero(); self.config.output_vocab()]),
        }
    }

    /// Returns the `|e| × 2d_h` encoder states as rows (forward ⊕ backward).
    pub fn encode(
        &self,
        tape: &mut Tape<'_, R>,
        src: &[usize],
        mut train: Option<&mut Rng>,
    ) -> Result<Var> {
        if src.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let l = &self.layout;
        let lstm_rate = self.config.lstm_dropout;
        let embs = crate::nn::embed(tape, l.src_embed, src)?;
        let mask_fw = match train.as_deref_mut() {
            Some(r) => LstmMasks::sample(tape, &l.encoder_fw, lstm_rate, r),
            None => LstmMasks::default(),
        };
        let mask_bw = match train.as_deref_mut() {
            Some(r) => LstmMasks::sample(tape, &l.encoder_bw, lstm_rate, r),
            None => LstmMasks::default(),
        };
        let d = self.config.d_hidden;
        let mut fw = Vec::with_capacity(src.len());
        let mut st = LstmState::zeros(tape, d);
        for &x in &embs {
            st = lstm_step(tape, &l.encoder_fw, x, st, mask_fw)?;
            fw.push(st.h);
        }
        let mut bw = vec![st.h; src.len()];
        let mut st = LstmState::zeros(tape, d);
        for (i, &x) in embs.iter().enumerate().rev() {
            st = lstm_step(tape, &l.encoder_bw, x, st, mask_bw)?;
            bw[i] = st.h;
        }
        let rows: Vec<Var> = fw
            .iter()
            .zip(&bw)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect::<Result<_>>()?;
        tape.stack_rows(&rows)
    }

    /// Encodes the source and prepares everything the decoder needs for one sentence.
    pub fn start(
        &self,
        tape: &mut Tape<'_, R>,
        src: &[usize],
        speaker: Option<usize>,
        mut train: Option<&mut Rng>,
    ) -> Result<(DecodeContext, DecoderState)> {
        let speaker = self.resolve_speaker(speaker)?;
        let enc = self.encode(tape, src, train.as_deref_mut())?;
        let memory = AttentionMemory::new(tape, &self.layout.attention, enc)?;
        let masks = match train {
            Some(r) => LstmMasks::sample(tape, &self.layout.decoder, self.config.lstm_dropout, r),
            None => LstmMasks::default(),
        };
        let bias = match speaker.index {
            Some(s) if self.config.mode.has_speaker_bias() => self.speaker_bias(tape, s)?,
            _ => None,
        };
        let d = self.config.d_hidden;
        let lstm = LstmState::zeros(tape, d);
        let context = tape.constant_vec(vec![R::zero(); 2 * d]);
        Ok((
            DecodeContext {
                memory,
                masks,
                bias,
                speaker,
            },
            DecoderState { lstm, context },
        ))
    }

    /// The forced first decoder input: BOS, or the speaker token in spk_token mode.
    pub fn first_input(&self, speaker: ResolvedSpeaker) -> usize {
        match self.config.mode {
            AdaptationMode::SpkToken => speaker
                .index
                .map_or(UNK, |s| self.config.speaker_token(s)),
            _ => BOS,
        }
    }

    /// One decoder step: consumes `w_{t-1}` and `c_{t-1}`, attends with the new
    /// hidden state, and returns `log p_t` over the output vocabulary.
    pub fn decode_step(
        &self,
        tape: &mut Tape<'_, R>,
        ctx: &DecodeContext,
        prev: usize,
        state: DecoderState,
        train: Option<&mut Rng>,
    ) -> Result<StepOutput> {
        let l = &self.layout;
        let prev_emb = tape.row_of(l.trg_embed, prev)?;
        let input = tape.concat(&[prev_emb, state.context])?;
        let lstm = lstm_step(tape, &l.decoder, input, state.lstm, ctx.masks)?;
        let att = attend(tape, &l.attention, lstm.h, &ctx.memory)?;

        let w_oh = tape.param(l.w_oh);
        let w_oc = tape.param(l.w_oc);
        let w_ow = tape.param(l.w_ow);
        let b_o = tape.param(l.b_o);
        let a = tape.matvec(w_oh, lstm.h)?;
        let b = tape.matvec(w_oc, att.context)?;
        let c = tape.matvec(w_ow, prev_emb)?;
        let ab = tape.add(a, b)?;
        let abc = tape.add(ab, c)?;
        let output = tape.add(abc, b_o)?;

        let dropped = match train {
            Some(r) if self.config.output_dropout > 0.0 => {
                let m = DropoutMask::<R>::sample(self.config.d_emb, self.config.output_dropout, r);
                let m = tape.constant_vec(m.values);
                apply_mask(tape, output, Some(m))?
            }
            _ => output,
        };
        let e_t = tape.param(l.trg_embed);
        let b_t = tape.param(l.b_t);
        let mut logits = tape.affine(dropped, e_t, b_t)?;
        if let Some(bias) = ctx.bias {
            logits = tape.add(logits, bias)?;
        }
        let log_probs = tape.log_softmax(logits)?;
        Ok(StepOutput {
            output,
            log_probs,
            state: DecoderState {
                lstm,
                context: att.context,
            },
        })
    }

    fn sequence_loss(
        &self,
        tape: &mut Tape<'_, R>,
        ex: &EncodedExample,
        eps: f64,
        mut train: Option<&mut Rng>,
    ) -> Result<Var> {
        if ex.trg.is_empty() {
            return Err(Error::Empty("sentence_loss target"));
        }
        let (ctx, mut state) = self.start(tape, &ex.src, ex.speaker, train.as_deref_mut())?;
        let mut inputs = vec![self.first_input(ctx.speaker)];
        inputs.extend_from_slice(&ex.trg);
        if let Some(r) = train.as_deref_mut() {
            let eligible: Vec<bool> = (0..inputs.len()).map(|i| i > 0).collect();
            inputs = word_dropout(&inputs, &eligible, self.config.word_dropout, UNK, r);
        }
        let targets = ex.trg.iter().copied().chain([EOS]);

        let mut terms = Vec::with_capacity(inputs.len());
        for (&inp, gold) in inputs.iter().zip(targets) {
            let step = self.decode_step(tape, &ctx, inp, state, train.as_deref_mut())?;
            state = step.state;
            terms.push(label_smoothed_nll(tape, step.log_probs, gold, eps, Some(PAD))?);
        }
        tape.add_scalars(&terms)
    }

    /// Label-smoothed training objective for one pair: summed over `w_1 … w_n EOS`.
    /// With `train = Some(rng)` dropout and word dropout are active.
    pub fn sentence_loss(
        &self,
        tape: &mut Tape<'_, R>,
        ex: &EncodedExample,
        train: Option<&mut Rng>,
    ) -> Result<Var> {
        self.sequence_loss(tape, ex, self.config.label_smoothing, train)
    }

    /// Unsmoothed negative log-likelihood in evaluation mode.
    pub fn sentence_nll(&self, tape: &mut Tape<'_, R>, ex: &EncodedExample) -> Result<Var> {
        self.sequence_loss(tape, ex, 0.0, None)
    }

    /// Number of scored target tokens of `ex` (words plus EOS).
    pub fn scored_tokens(ex: &EncodedExample) -> usize {
        ex.trg.len() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Gradients;

    fn toy(mode: AdaptationMode) -> Seq2Seq<f64> {
        Seq2Seq::init(ModelConfig::small(8, 12, 12, 3, mode).with_rank(2), 11).unwrap()
    }

    fn ex(src: &[usize], trg: &[usize], speaker: Option<usize>) -> EncodedExample {
        EncodedExample {
            src: src.to_vec(),
            trg: trg.to_vec(),
            speaker,
        }
    }

    fn step_probs(m: &Seq2Seq<f64>, src: &[usize], speaker: Option<usize>) -> Vec<f64> {
        let mut t = Tape::new(&m.params);
        let (ctx, st) = m.start(&mut t, src, speaker, None).unwrap();
        let first = m.first_input(ctx.speaker);
        let out = m.decode_step(&mut t, &ctx, first, st, None).unwrap();
        t.value(out.log_probs).iter().map(|x| x.exp()).collect()
    }

    #[test]
    fn init_is_deterministic_and_bias_starts_at_zero() {
        let a = toy(AdaptationMode::FullBias);
        let b = toy(AdaptationMode::FullBias);
        assert!(a.params.values_equal(&b.params));
        let SpeakerBiasParams::Full { table } = a.layout.speaker else {
            panic!()
        };
        assert!(a.params.value(table).data().iter().all(|&x| x == 0.0));
        let f = toy(AdaptationMode::FactBias);
        for s in 0..3 {
            assert!(f.speaker_bias_values(s).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn encoder_shapes_and_errors() {
        let m = toy(AdaptationMode::Base);
        let mut t = Tape::new(&m.params);
        let e = m.encode(&mut t, &[5], None).unwrap();
        assert_eq!(t.shape(e), &[1, 16]);
        assert!(m.encode(&mut t, &[], None).is_err());
    }

    #[test]
    fn encoder_palindrome_symmetry_with_shared_directions() {
        let mut m = toy(AdaptationMode::Base);
        let (fw, bw) = (m.layout.encoder_fw.clone(), m.layout.encoder_bw.clone());
        let w = m.params.value(fw.weight).clone();
        let b = m.params.value(fw.bias).clone();
        *m.params.value_mut(bw.weight) = w;
        *m.params.value_mut(bw.bias) = b;
        let mut t = Tape::new(&m.params);
        let e = m.encode(&mut t, &[6, 9, 6], None).unwrap();
        let v = t.value(e);
        let row = |i: usize| &v[i * 16..(i + 1) * 16];
        for i in 0..3 {
            let j = 2 - i;
            for k in 0..8 {
                assert!((row(i)[k] - row(j)[8 + k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let mut m = toy(AdaptationMode::Base);
        m.params.fill_values(0.0);
        let mut t = Tape::new(&m.params);
        let e = m.encode(&mut t, &[4, 5, 6], None).unwrap();
        assert!(t.value(e).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn base_mode_ignores_speaker() {
        let m = toy(AdaptationMode::Base);
        assert_eq!(step_probs(&m, &[4, 5], Some(0)), step_probs(&m, &[4, 5], Some(2)));
        assert_eq!(step_probs(&m, &[4, 5], Some(0)), step_probs(&m, &[4, 5], None));
    }

    #[test]
    fn zero_bias_matches_base() {
        let base = toy(AdaptationMode::Base);
        let full = toy(AdaptationMode::FullBias);
        let p = step_probs(&base, &[4, 7, 5], None);
        let q = step_probs(&full, &[4, 7, 5], Some(1));
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn positive_bias_raises_that_token() {
        let mut full = toy(AdaptationMode::FullBias);
        let before = step_probs(&full, &[4, 7], Some(1));
        let SpeakerBiasParams::Full { table } = full.layout.speaker else {
            panic!()
        };
        let v = full.config.output_vocab();
        full.params.value_mut(table).data_mut()[v + 6] = 10.0;
        let after = step_probs(&full, &[4, 7], Some(1));
        assert!(after[6] > before[6]);
    }

    #[test]
    fn factored_bias_is_a_mixture_of_centroids() {
        let mut m = toy(AdaptationMode::FactBias);
        let SpeakerBiasParams::Factored { weights, centroids } = m.layout.speaker else {
            panic!()
        };
        let v = m.config.output_vocab();
        let u: Vec<f64> = (0..v).map(|i| i as f64).collect();
        let w: Vec<f64> = (0..v).map(|i| 1.0 - i as f64 * 0.5).collect();
        let cd = m.params.value_mut(centroids).data_mut();
        cd[..v].copy_from_slice(&u);
        cd[v..].copy_from_slice(&w);
        m.params.value_mut(weights).data_mut()[..6].copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.speaker_bias_values(0).unwrap(), u);
        assert!(m.speaker_bias_values(1).unwrap().iter().all(|&x| x == 0.0));
        let sum: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
        assert_eq!(m.speaker_bias_values(2).unwrap(), sum);
        assert!(m.speaker_bias_values(3).is_err());
    }

    #[test]
    fn unknown_speaker_policy() {
        let mut m = toy(AdaptationMode::FullBias);
        let r = m.resolve_speaker(None).unwrap();
        assert!(r.fallback && r.index.is_none());
        assert!(m.resolve_speaker(Some(7)).unwrap().fallback);
        m.config.unknown_speaker = UnknownSpeakerPolicy::Error;
        assert!(matches!(m.resolve_speaker(None), Err(Error::UnknownSpeaker(_))));
        assert!(!m.resolve_speaker(Some(2)).unwrap().fallback);
    }

    #[test]
    fn zero_model_loss_is_length_times_log_vocab() {
        for mode in AdaptationMode::ALL {
            let mut m = toy(mode);
            m.params.fill_values(0.0);
            m.config.label_smoothing = 0.0;
            let e = ex(&[4, 5], &[6, 7, 8], Some(0));
            let mut t = Tape::new(&m.params);
            let l = m.sentence_loss(&mut t, &e, None).unwrap();
            let expected = 4.0 * (m.config.output_vocab() as f64).ln();
            assert!((t.scalar(l) - expected).abs() < 1e-10, "{mode}");
        }
    }

    #[test]
    fn eval_loss_is_deterministic_and_additive() {
        let m = toy(AdaptationMode::FactBias);
        let e = ex(&[4, 9, 5], &[6, 7], Some(2));
        let loss = || {
            let mut t = Tape::new(&m.params);
            let l = m.sentence_loss(&mut t, &e, None).unwrap();
            t.scalar(l)
        };
        assert_eq!(loss().to_bits(), loss().to_bits());
        let mut t = Tape::new(&m.params);
        let a = m.sentence_loss(&mut t, &e, None).unwrap();
        let b = m.sentence_loss(&mut t, &e, None).unwrap();
        let s = t.add(a, b).unwrap();
        assert!((t.scalar(s) - 2.0 * loss()).abs() < 1e-12);
    }

    #[test]
    fn spk_token_vocabulary_and_first_input() {
        let m = toy(AdaptationMode::SpkToken);
        assert_eq!(m.params.value(m.layout.trg_embed).rows(), 15);
        let r = m.resolve_speaker(Some(2)).unwrap();
        assert_eq!(m.first_input(r), 14);
        assert_eq!(m.first_input(m.resolve_speaker(None).unwrap()), UNK);
    }

    #[test]
    fn training_mode_gradients_are_reproducible() {
        let m = toy(AdaptationMode::FullBias);
        let e = ex(&[4, 9, 5], &[6, 7, 8], Some(1));
        let grads = || {
            let mut t = Tape::new(&m.params);
            let mut r = rng::seeded(3);
            let l = m.sentence_loss(&mut t, &e, Some(&mut r)).unwrap();
            let mut g = Gradients::for_store(&m.params);
            t.backward(l, &mut g).unwrap();
            g.get(m.layout.trg_embed).unwrap().to_vec()
        };
        assert_eq!(grads(), grads());
    }

    fn randomized(mode: AdaptationMode) -> Seq2Seq<f64> {
        use rand_distr::{Distribution, Normal};
        let mut m = toy(mode);
        let mut r = rng::seeded(21);
        let n = Normal::new(0.0, 0.3).unwrap();
        for p in m.params.iter_mut() {
            for x in p.value.data_mut() {
                *x = n.sample(&mut r);
            }
        }
        m
    }

    #[test]
    fn end_to_end_gradient_check_all_modes() {
        for mode in AdaptationMode::ALL {
            let m = randomized(mode);
            let e = ex(&[4, 9, 5], &[6, 7], Some(1));
            // Step 1e-4: at 1e-5 roundoff on a loss of ~10 already reaches 1e-10,
            // which is large next to the smallest true gradients (~1e-6).
            let eval = crate::autodiff::grad_check(&m.params, None, 1e-4, |t| {
                m.sentence_loss(t, &e, None)
            })
            .unwrap();
            assert!(eval.max_rel_error < 1e-4, "{mode}: {eval:?}");
            let train = crate::autodiff::grad_check(&m.params, None, 1e-4, |t| {
                let mut r = rng::seeded(5);
                m.sentence_loss(t, &e, Some(&mut r))
            })
            .unwrap();
            assert!(train.max_rel_error < 1e-4, "{mode} (train): {train:?}");
        }
    }

    #[test]
    fn factored_bias_matrix_has_rank_at_most_r() {
        let mut m = Seq2Seq::<f64>::init(
            ModelConfig::small(4, 10, 10, 6, AdaptationMode::FactBias).with_rank(2),
            3,
        )
        .unwrap();
        let SpeakerBiasParams::Factored { centroids, .. } = m.layout.speaker else {
            panic!()
        };
        for (i, x) in m.params.value_mut(centroids).data_mut().iter_mut().enumerate() {
            *x = ((i * 7919) % 13) as f64 - 6.0;
        }
        let rows: Vec<Vec<f64>> = (0..6).map(|s| m.speaker_bias_values(s).unwrap()).collect();
        assert_eq!(numerical_rank(rows, 1e-6), 2);
    }

    /// Gram–Schmidt rank with a tolerance relative to the largest row norm.
    pub(crate) fn numerical_rank(rows: Vec<Vec<f64>>, tol: f64) -> usize {
        let scale = rows
            .iter()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut r in rows {
            for b in &basis {
                let d: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > tol * scale {
                basis.push(r.into_iter().map(|x| x / n).collect());
            }
        }
        basis.len()
    }

    #[test]
    fn embedding_init_statistics_at_full_size() {
        let c = ModelConfig::full_size(40_000, 10, 1, AdaptationMode::Base);
        let mut r = rng::seeded(0);
        let t: Tensor<f32> = normal_init(&[c.src_vocab, c.d_emb], 1.0 / (c.d_emb as f64).sqrt(), &mut r);
        let n = t.len() as f64;
        let mean = t.data().iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = t.data().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        let target = 1.0 / 512f64.sqrt();
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() - target).abs() / target < 0.05);
    }

    #[test]
    fn fresh_full_bias_matches_base_everywhere() {
        let base = toy(AdaptationMode::Base);
        let full = toy(AdaptationMode::FullBias);
        for (src, spk) in [(&[4usize, 5][..], 0), (&[9, 9, 9, 6][..], 2)] {
            let p = step_probs(&base, src, None);
            let q = step_probs(&full, src, Some(spk));
            assert_eq!(p, q);
        }
    }
}
