//! Continuous bag-of-n-grams speaker classifier used as a probe of how much
//! speaker-specific style survives in translations.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::nn::normal_init;
use crate::rng;
use crate::tensor::{kernels, Tensor};
use crate::train::{adam_step, AdamHyper, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

const SEP: char = '\u{1f}';

fn ngram_keys(sentence: &[String]) -> impl Iterator<Item = String> + '_ {
    let uni = sentence.iter().cloned();
    let bi = sentence.windows(2).map(|w| format!("{}{SEP}{}", w[0], w[1]));
    uni.chain(bi)
}

/// `p(s | f) ∝ exp(w_sᵀ h_f + b_s)` with `h_f` the mean of the unigram and
/// bigram vectors of `f`.
#[derive(Clone, Debug)]
pub struct SpeakerClassifier {
    pub num_speakers: usize,
    pub dim: usize,
    ngrams: HashMap<String, usize>,
    pub params: ParamStore<f64>,
    pub vectors: ParamId,
    pub weights: ParamId,
    pub biases: ParamId,
}

/// Known n-gram rows of a sentence and the total n-gram count, which includes
/// unseen n-grams (they contribute a zero vector).
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub rows: Vec<usize>,
    pub count: usize,
}

impl SpeakerClassifier {
    /// Untrained classifier over the n-grams of `sentences`: vectors drawn from
    /// `N(0, 1/√dim)`, weights and biases zero.
    pub fn new(sentences: &[Vec<String>], num_speakers: usize, dim: usize, seed: u64) -> Result<Self> {
        if num_speakers < 2 {
            return Err(Error::Data(format!(
                "speaker classifier needs at least 2 speakers, got {num_speakers}"
            )));
        }
        let mut ngrams = HashMap::new();
        let mut order = Vec::new();
        for s in sentences {
            for k in ngram_keys(s) {
                if !ngrams.contains_key(&k) {
                    ngrams.insert(k.clone(), order.len());
                    order.push(k);
                }
            }
        }
        let mut r = rng::derived(seed, "classifier-init");
        let mut params = ParamStore::new();
        let std = 1.0 / (dim as f64).sqrt();
        let vectors = params.add("classifier.v", normal_init(&[order.len().max(1), dim], std, &mut r));
        let weights = params.add("classifier.w", Tensor::zeros(&[num_speakers, dim]));
        let biases = params.add("classifier.b", Tensor::zeros(&[num_speakers]));
        Ok(Self {
            num_speakers,
            dim,
            ngrams,
            params,
            vectors,
            weights,
            biases,
        })
    }

    pub fn num_ngrams(&self) -> usize {
        self.ngrams.len()
    }

    pub fn features(&self, sentence: &[String]) -> Result<Features> {
        if sentence.is_empty() {
            return Err(Error::Empty("classify: sentence"));
        }
        let mut rows = Vec::new();
        let mut count = 0;
        for k in ngram_keys(sentence) {
            count += 1;
            if let Some(&i) = self.ngrams.get(&k) {
                rows.push(i);
            }
        }
        Ok(Features { rows, count })
    }

    pub fn hidden(&self, f: &Features) -> Vec<f64> {
        let v = self.params.value(self.vectors);
        let mut h = vec![0.0; self.dim];
        for &i in &f.rows {
            h.iter_mut().zip(v.row(i)).for_each(|(a, &b)| *a += b);
        }
        let inv = 1.0 / f.count as f64;
        h.iter_mut().for_each(|x| *x *= inv);
        h
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let w = self.params.value(self.weights);
        let b = self.params.value(self.biases);
        let mut z = vec![0.0; self.num_speakers];
        kernels::matvec(w.data(), h, &mut z, self.num_speakers, self.dim);
        z.iter_mut().zip(b.data()).for_each(|(a, &c)| *a += c);
        z
    }

    /// Speaker distribution for one sentence.
    pub fn classify(&self, sentence: &[String]) -> Result<Vec<f64>> {
        let f = self.features(sentence)?;
        Ok(kernels::softmax(&self.logits(&self.hidden(&f))))
    }

    /// Argmax speaker (lowest index on ties).
    pub fn predict(&self, sentence: &[String]) -> Result<usize> {
        Ok(argmax(&self.classify(sentence)?))
    }

    /// The prediction for a sentence with no known n-grams: the argmax of `b`.
    pub fn prior_prediction(&self) -> usize {
        argmax(self.params.value(self.biases).data())
    }

    /// Cross-entropy of one example; adds `scale ·` its gradient into the
    /// parameter gradient buffers.
    pub fn accumulate_gradient(&mut self, sentence: &[String], label: usize, scale: f64) -> Result<f64> {
        if label >= self.num_speakers {
            return Err(Error::Index {
                op: "classifier label",
                index: label,
                len: self.num_speakers,
            });
        }
        let f = self.features(sentence)?;
        let h = self.hidden(&f);
        let mut p = kernels::softmax(&self.logits(&h));
        let loss = -p[label].max(f64::MIN_POSITIVE).ln();
        p[label] -= 1.0;
        let dz: Vec<f64> = p.iter().map(|x| x * scale).collect();
        let mut dh = vec![0.0; self.dim];
        kernels::matvec_t(self.params.value(self.weights).data(), &dz, &mut dh, self.num_speakers, self.dim);
        {
            let gw = self.params.get_mut(self.weights).grad.data_mut();
            for (s, &d) in dz.iter().enumerate() {
                gw[s * self.dim..(s + 1) * self.dim]
                    .iter_mut()
                    .zip(&h)
                    .for_each(|(g, &x)| *g += d * x);
            }
        }
        self.params
            .get_mut(self.biases)
            .grad
            .data_mut()
            .iter_mut()
            .zip(&dz)
            .for_each(|(g, &d)| *g += d);
        let inv = 1.0 / f.count as f64;
        let gv = self.params.get_mut(self.vectors).grad.data_mut();
        for &i in &f.rows {
            gv[i * self.dim..(i + 1) * self.dim]
                .iter_mut()
                .zip(&dh)
                .for_each(|(g, &d)| *g += d * inv);
        }
        Ok(loss)
    }

    /// Mean cross-entropy over a labelled set.
    pub fn loss(&self, sentences: &[Vec<String>], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (s, &l) in sentences.iter().zip(labels) {
            total -= self.classify(s)?[l].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / sentences.len().max(1) as f64)
    }
}

/// Trains a classifier with Adam on shuffled mini-batches (mean cross-entropy per batch).
pub fn train_classifier(
    sentences: &[Vec<String>],
    labels: &[usize],
    num_speakers: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<SpeakerClassifier> {
    if sentences.len() != labels.len() {
        return Err(Error::Shape {
            op: "train_classifier",
            left: vec![sentences.len()],
            right: vec![labels.len()],
        });
    }
    if sentences.is_empty() {
        return Err(Error::Empty("train_classifier"));
    }
    let mut clf = SpeakerClassifier::new(sentences, num_speakers, cfg.dim, seed)?;
    let hyper = AdamHyper::default();
    let mut state = AdamState::default();
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut r = rng::derived(seed, "classifier-batches");
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            clf.params.zero_grad();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                clf.accumulate_gradient(&sentences[i], labels[i], scale)?;
            }
            adam_step(&mut clf.params, cfg.lr, &hyper, &mut state);
        }
    }
    clf.params.zero_grad();
    Ok(clf)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Fraction of sentences whose predicted speaker equals the annotation.
pub fn probe_accuracy(clf: &SpeakerClassifier, sentences: &[Vec<String>], labels: &[usize]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Empty("probe_accuracy"));
    }
    if sentences.len() != labels.len() {
        return Err(Error::Shape {
            op: "probe_accuracy",
            left: vec![sentences.len()],
            right: vec![labels.len()],
        });
    }
    let mut correct = 0;
    for (s, &l) in sentences.iter().zip(labels) {
        // empty system outputs carry no n-grams, so only the prior is left
        let pred = if s.is_empty() { clf.prior_prediction() } else { clf.predict(s)? };
        if pred == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / sentences.len() as f64)
}

/// Seeded 90/10 split of `0..n` into (train, held-out) index lists, each sorted.
pub fn holdout_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::derived(seed, "classifier-holdout"));
    let held = n / 10;
    let mut test = idx[..held].to_vec();
    let mut train = idx[held..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}
