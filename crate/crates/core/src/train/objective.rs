use crate::autodiff::{Gradients, ParamStore, Tape};
use crate::data::{make_batches, Batch, EncodedExample};
use crate::error::{Error, Result};
use crate::model::Seq2Seq;
use crate::rng::{self, Rng};
use crate::tensor::Real;

use super::fit::Objective;

/// `exp(Σ NLL / Σ tokens)` in evaluation mode, unsmoothed, with EOS counted.
pub fn validate_perplexity<R: Real>(
    model: &Seq2Seq<R>,
    params: &ParamStore<R>,
    dev: &[EncodedExample],
) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::Empty("validate_perplexity"));
    }
    let (mut nll, mut tokens) = (0.0, 0usize);
    for ex in dev {
        let mut tape = Tape::new(params);
        let l = model.sentence_nll(&mut tape, ex)?;
        nll += tape.scalar(l).f64();
        tokens += Seq2Seq::<R>::scored_tokens(ex);
    }
    Ok((nll / tokens as f64).exp())
}

/// Mini-batch objective over a parallel corpus. Each batch contributes the
/// mean of its sentence losses; batches and dropout draw from streams
/// derived from `seed` and the epoch counter.
pub struct Seq2SeqObjective<'a, R: Real> {
    pub model: &'a Seq2Seq<R>,
    pub train: &'a [EncodedExample],
    pub dev: &'a [EncodedExample],
    pub batch_size: usize,
    seed: u64,
    epoch: usize,
    batches: Vec<Batch>,
    dropout: Rng,
    scratch: Gradients<R>,
}

impl<'a, R: Real> Seq2SeqObjective<'a, R> {
    /// `model` supplies the architecture; the parameters passed by
    /// [`fit`](super::fit) are the ones read and updated.
    pub fn new(
        model: &'a Seq2Seq<R>,
        train: &'a [EncodedExample],
        dev: &'a [EncodedExample],
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if dev.is_empty() {
            return Err(Error::Empty("dev set"));
        }
        Ok(Self {
            model,
            train,
            dev,
            batch_size,
            seed,
            epoch: 0,
            batches: Vec::new(),
            dropout: rng::derived(seed, "dropout"),
            scratch: Gradients::for_store(&model.params),
        })
    }

    pub fn epochs_started(&self) -> usize {
        self.epoch
    }
}

impl<R: Real> Objective<R> for Seq2SeqObjective<'_, R> {
    fn begin_epoch(&mut self) -> usize {
        let label = format!("batches/{}", self.epoch);
        self.batches = make_batches(self.train, self.batch_size, &mut rng::derived(self.seed, &label));
        self.dropout = rng::derived(self.seed, &format!("dropout/{}", self.epoch));
        self.epoch += 1;
        self.batches.len()
    }

    fn batch(&mut self, params: &mut ParamStore<R>, batch: usize) -> Result<(f64, usize)> {
        let idx = &self.batches[batch].indices;
        let (mut loss, mut tokens) = (0.0, 0usize);
        for &i in idx {
            let ex = &self.train[i];
            self.scratch.clear();
            let mut tape = Tape::new(params);
            let l = self.model.sentence_loss(&mut tape, ex, Some(&mut self.dropout))?;
            loss += tape.scalar(l).f64();
            tokens += Seq2Seq::<R>::scored_tokens(ex);
            tape.backward(l, &mut self.scratch)?;
            params.accumulate(&self.scratch);
        }
        params.scale_grads(R::of(1.0 / idx.len() as f64));
        Ok((loss, tokens))
    }

    fn dev_perplexity(&mut self, params: &ParamStore<R>) -> Result<f64> {
        validate_perplexity(self.model, params, self.dev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdaptationMode, ModelConfig};
    use crate::train::{fit, train_schedule, Phase, TrainConfig};

    fn ex(src: &[usize], trg: &[usize], speaker: usize) -> EncodedExample {
        EncodedExample {
            src: src.to_vec(),
            trg: trg.to_vec(),
            speaker: Some(speaker),
        }
    }

    fn toy_corpus() -> Vec<EncodedExample> {
        (0..20)
            .map(|i| {
                let a = 4 + i % 6;
                let b = 4 + (i * 5) % 7;
                ex(&[a, b, 4 + i % 3], &[a + 1, b, 5], i % 2)
            })
            .collect()
    }

    #[test]
    fn zero_model_perplexity_is_vocab_size() {
        let mut m = Seq2Seq::<f64>::init(ModelConfig::small(4, 12, 12, 2, AdaptationMode::Base), 0).unwrap();
        m.params.fill_values(0.0);
        let dev = toy_corpus();
        let ppl = validate_perplexity(&m, &m.params, &dev).unwrap();
        assert!((ppl - 12.0).abs() < 1e-9);
    }

    #[test]
    fn perplexity_is_invariant_to_duplication() {
        let m = Seq2Seq::<f64>::init(ModelConfig::small(4, 12, 12, 2, AdaptationMode::FullBias), 0).unwrap();
        let dev = toy_corpus();
        let twice: Vec<_> = dev.iter().chain(&dev).cloned().collect();
        let a = validate_perplexity(&m, &m.params, &dev).unwrap();
        let b = validate_perplexity(&m, &m.params, &twice).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
        assert!(validate_perplexity(&m, &m.params, &[]).is_err());
    }

    #[test]
    fn train_loss_decreases_on_tiny_corpus() {
        let data = toy_corpus();
        let cfg = ModelConfig::small(16, 12, 12, 2, AdaptationMode::FullBias);
        let model = Seq2Seq::<f32>::init(cfg, 4).unwrap();
        let mut params = model.params.clone();
        let mut obj = Seq2SeqObjective::new(&model, &data, &data, 4, 1).unwrap();
        let mut phase = Phase::adam(&TrainConfig::default());
        phase.lr = 1e-2;
        phase.max_epochs = 5;
        phase.patience = 5;
        let log = fit(&mut params, &mut obj, phase, |_, _| Ok(())).unwrap();
        let losses: Vec<f64> = log.records.iter().map(|r| r.train_loss).collect();
        assert_eq!(losses.len(), 5);
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn schedule_is_deterministic_and_respects_clip() {
        let data = toy_corpus();
        let cfg = ModelConfig::small(8, 12, 12, 2, AdaptationMode::FactBias).with_rank(2);
        let model = Seq2Seq::<f32>::init(cfg, 4).unwrap();
        let tc = TrainConfig {
            max_epochs: 3,
            finetune_max_epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let run = || {
            let mut params = model.params.clone();
            let mut obj = Seq2SeqObjective::new(&model, &data, &data[..6], tc.batch_size, 9).unwrap();
            let log = train_schedule(&mut params, &mut obj, &tc, |_, _| Ok(())).unwrap();
            (params, log)
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert!(p1.values_equal(&p2));
        assert_eq!(l1.without_timing(), l2.without_timing());
        for r in l1.records.iter().filter(|r| r.phase == "sgd") {
            assert!(r.max_clipped_norm <= 0.1 * (1.0 + 1e-6));
        }
        for r in &l1.records {
            assert!(r.max_clipped_norm <= r.max_grad_norm.min(if r.phase == "adam" { 1.0 } else { 0.1 }) * (1.0 + 1e-5));
        }
    }
}
