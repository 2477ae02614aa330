//! Generated corpora: a speaker-lexicon translation task where the correct
//! target synonym depends only on the speaker, and a small raw toy corpus.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use serde::Serialize;

use crate::data::{
    encode_corpus, make_splits, ParallelExample, RawExample, SpeakerTable, Vocabulary,
    DEFAULT_MAX_SIZE,
};
use crate::decode::translate;
use crate::error::Result;
use crate::eval::{corpus_bleu, probe_accuracy, train_classifier, ClassifierConfig};
use crate::model::{AdaptationMode, ModelConfig, Seq2Seq};
use crate::rng;
use crate::train::{train_schedule, Seq2SeqObjective, TrainConfig};

/// Word-by-word monotone task. Source fillers `sNN` translate to `tNN`;
/// source concept `cK` translates to `cKa` or `cKb` according to bit `K` of
/// the speaker's code. Codes are balanced so that every concept is rendered
/// each way by exactly half of the speakers.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconTask {
    pub num_speakers: usize,
    pub pairs_per_speaker: usize,
    pub num_concepts: usize,
    pub num_fillers: usize,
    /// Inclusive range of concepts per sentence.
    pub concepts_per_sentence: (usize, usize),
    pub fillers_per_sentence: (usize, usize),
    pub seed: u64,
}

impl Default for LexiconTask {
    fn default() -> Self {
        Self {
            num_speakers: 20,
            pairs_per_speaker: 100,
            num_concepts: 4,
            num_fillers: 30,
            concepts_per_sentence: (2, 4),
            fillers_per_sentence: (2, 4),
            seed: 1,
        }
    }
}

/// Synonym choices of a system on a set of sentences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SynonymScore {
    pub correct: usize,
    pub total: usize,
}

impl SynonymScore {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

impl LexiconTask {
    pub fn speaker_name(s: usize) -> String {
        format!("spk{s:02}")
    }

    pub fn talk_name(s: usize) -> String {
        format!("talk{s:02}")
    }

    fn speaker_index(&self, name: &str) -> Option<usize> {
        let s: usize = name.strip_prefix("spk")?.parse().ok()?;
        (s < self.num_speakers).then_some(s)
    }

    /// Per-speaker bit vectors. The first `2^K` speakers take every code once;
    /// further speakers come in complementary pairs of half-weight codes.
    pub fn codes(&self) -> Vec<Vec<bool>> {
        let k = self.num_concepts;
        let bits = |x: usize| (0..k).map(|i| (x >> (k - 1 - i)) & 1 == 1).collect::<Vec<_>>();
        let full = 1usize << k;
        let mut out: Vec<Vec<bool>> = (0..self.num_speakers.min(full)).map(bits).collect();
        let mut used = std::collections::HashSet::new();
        let mut extra = (0..full).filter(|x| x.count_ones() as usize * 2 == k);
        while out.len() < self.num_speakers {
            let Some(x) = extra.next() else {
                // fall back to cycling the full code list
                let i = out.len() % full;
                out.push(bits(i));
                continue;
            };
            let comp = !x & (full - 1);
            if used.contains(&x) || used.contains(&comp) {
                continue;
            }
            used.insert(x);
            used.insert(comp);
            out.push(bits(x));
            if out.len() < self.num_speakers {
                out.push(bits(comp));
            }
        }
        out
    }

    pub fn concept_source(k: usize) -> String {
        format!("c{k}")
    }

    pub fn concept_target(k: usize, variant_b: bool) -> String {
        format!("c{k}{}", if variant_b { 'b' } else { 'a' })
    }

    /// Correct target token for concept `k` spoken by `speaker`.
    pub fn correct_target(&self, speaker: &str, k: usize) -> Option<String> {
        let s = self.speaker_index(speaker)?;
        Some(Self::concept_target(k, self.codes()[s][k]))
    }

    /// One talk per speaker, `pairs_per_speaker` pairs each.
    pub fn generate(&self) -> Vec<ParallelExample> {
        let codes = self.codes();
        let mut r = rng::derived(self.seed, "lexicon");
        let concepts: Vec<usize> = (0..self.num_concepts).collect();
        let mut out = Vec::with_capacity(self.num_speakers * self.pairs_per_speaker);
        for (s, code) in codes.iter().enumerate() {
            for _ in 0..self.pairs_per_speaker {
                let (lo, hi) = self.concepts_per_sentence;
                let nc = r.random_range(lo..=hi.min(self.num_concepts));
                let (flo, fhi) = self.fillers_per_sentence;
                let nf = r.random_range(flo..=fhi);
                let mut slots: Vec<(String, String)> = concepts
                    .choose_multiple(&mut r, nc)
                    .map(|&k| (Self::concept_source(k), Self::concept_target(k, code[k])))
                    .collect();
                for _ in 0..nf {
                    let f = r.random_range(0..self.num_fillers);
                    slots.push((format!("s{f:02}"), format!("t{f:02}")));
                }
                slots.shuffle(&mut r);
                let (src, trg) = slots.into_iter().unzip();
                out.push(ParallelExample {
                    talk: Self::talk_name(s),
                    speaker: Self::speaker_name(s),
                    src,
                    trg,
                });
            }
        }
        out
    }

    /// Scores each concept occurrence of each source sentence: correct when
    /// the hypothesis contains the speaker's synonym and not the other one.
    pub fn synonym_score(&self, examples: &[ParallelExample], hyps: &[Vec<String>]) -> SynonymScore {
        let mut score = SynonymScore::default();
        for (ex, hyp) in examples.iter().zip(hyps) {
            for k in 0..self.num_concepts {
                if !ex.src.contains(&Self::concept_source(k)) {
                    continue;
                }
                score.total += 1;
                let Some(good) = self.correct_target(&ex.speaker, k) else {
                    continue;
                };
                let bad = Self::concept_target(k, !good.ends_with('b'));
                if hyp.contains(&good) && !hyp.contains(&bad) {
                    score.correct += 1;
                }
            }
        }
        score
    }

    /// Best accuracy attainable without knowing the speaker: always choosing
    /// the majority synonym of each concept.
    pub fn majority_baseline(&self, examples: &[ParallelExample]) -> f64 {
        let mut counts = vec![[0usize; 2]; self.num_concepts];
        for ex in examples {
            let Some(s) = self.speaker_index(&ex.speaker) else { continue };
            let code = &self.codes()[s];
            for k in 0..self.num_concepts {
                if ex.src.contains(&Self::concept_source(k)) {
                    counts[k][code[k] as usize] += 1;
                }
            }
        }
        let (best, total) = counts
            .iter()
            .fold((0, 0), |(b, t), c| (b + c[0].max(c[1]), t + c[0] + c[1]));
        best as f64 / total.max(1) as f64
    }
}

/// Seed of the copy bundled at `data/toy_corpus.jsonl`.
pub const TOY_SEED: u64 = 2024;

/// The bundled toy corpus: 5 speakers over 10 talks of 20 pairs, plus records
/// that preprocessing and filtering must remove (an empty side, over-long
/// sentences, and a 6-pair talk). Text is cased and punctuated.
pub fn toy_corpus(seed: u64) -> Vec<RawExample> {
    const SUBJECTS: [&str; 6] = ["the cat", "my friend", "a teacher", "the city", "our team", "this idea"];
    const VERBS: [(&str, &str); 6] = [
        ("sees", "voit"),
        ("likes", "aime"),
        ("finds", "trouve"),
        ("helps", "aide"),
        ("changes", "change"),
        ("builds", "construit"),
    ];
    const OBJECTS: [(&str, &str); 6] = [
        ("the house", "la maison"),
        ("a dog", "un chien"),
        ("the world", "le monde"),
        ("some water", "de l' eau"),
        ("the book", "le livre"),
        ("a problem", "un problème"),
    ];
    const SUBJ_FR: [&str; 6] = ["le chat", "mon ami", "un professeur", "la ville", "notre équipe", "cette idée"];
    // each speaker has a favourite closing word, rendered in the target only
    const CLOSERS: [&str; 5] = ["vraiment", "donc", "enfin", "bref", "voilà"];

    let mut r = rng::derived(seed, "toy-corpus");
    let mut out = Vec::new();
    let sentence = |r: &mut rng::Rng, speaker: usize| {
        let s = r.random_range(0..SUBJECTS.len());
        let (v_en, v_fr) = VERBS[r.random_range(0..VERBS.len())];
        let (o_en, o_fr) = OBJECTS[r.random_range(0..OBJECTS.len())];
        let mut en = format!("{} {v_en} {o_en}", SUBJECTS[s]);
        let mut fr = format!("{} {v_fr} {o_fr}", SUBJ_FR[s]);
        if r.random_bool(0.5) {
            en.push_str(", really");
            fr.push_str(&format!(", {}", CLOSERS[speaker]));
        }
        let cap = |x: &str| {
            let mut c = x.chars();
            c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
        };
        (cap(&en) + ".", cap(&fr) + ".")
    };
    for talk in 0..10 {
        let speaker = talk % 5;
        for _ in 0..20 {
            let (src, trg) = sentence(&mut r, speaker);
            out.push(RawExample {
                talk: format!("toy{talk:02}"),
                speaker: format!("speaker{speaker}"),
                src,
                trg,
            });
        }
    }
    for _ in 0..6 {
        let (src, trg) = sentence(&mut r, 0);
        out.push(RawExample {
            talk: "toy-short".into(),
            speaker: "speaker0".into(),
            src,
            trg,
        });
    }
    let long_en = vec!["word"; 61].join(" ");
    let long_fr = vec!["mot"; 61].join(" ");
    out.push(RawExample {
        talk: "toy00".into(),
        speaker: "speaker0".into(),
        src: long_en,
        trg: "Un mot.".into(),
    });
    out.push(RawExample {
        talk: "toy01".into(),
        speaker: "speaker1".into(),
        src: "One word.".into(),
        trg: long_fr,
    });
    out.push(RawExample {
        talk: "toy02".into(),
        speaker: "speaker2".into(),
        src: "Nothing here.".into(),
        trg: "   ".into(),
    });
    out
}

/// Settings of the speaker-lexicon experiment.
#[derive(Clone, Debug)]
pub struct LexiconExperiment {
    pub task: LexiconTask,
    pub modes: Vec<AdaptationMode>,
    pub dim: usize,
    pub rank: usize,
    pub train: TrainConfig,
    pub per_talk_dev: usize,
    pub per_talk_test: usize,
    pub beam: usize,
    pub probe: ClassifierConfig,
    pub seed: u64,
}

impl Default for LexiconExperiment {
    fn default() -> Self {
        Self {
            task: LexiconTask::default(),
            modes: vec![AdaptationMode::Base, AdaptationMode::FullBias, AdaptationMode::FactBias],
            dim: 32,
            rank: 4,
            train: TrainConfig {
                max_epochs: 60,
                finetune_max_epochs: 10,
                ..TrainConfig::default()
            },
            per_talk_dev: 5,
            per_talk_test: 10,
            beam: 5,
            probe: ClassifierConfig::default(),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeOutcome {
    pub mode: AdaptationMode,
    pub synonym_accuracy: f64,
    pub probe_accuracy: f64,
    pub bleu: f64,
    pub dev_perplexity: f64,
    pub epochs: usize,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LexiconOutcome {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub majority_baseline: f64,
    pub ground_truth_probe: f64,
    pub modes: Vec<ModeOutcome>,
}

impl LexiconOutcome {
    pub fn mode(&self, m: AdaptationMode) -> Option<&ModeOutcome> {
        self.modes.iter().find(|o| o.mode == m)
    }
}

/// Generates the task, trains one model per mode, translates the held-out
/// sentences with beam search, and scores synonym choice and the speaker probe.
pub fn run_lexicon_experiment(
    exp: &LexiconExperiment,
    mut progress: impl FnMut(&str),
) -> Result<LexiconOutcome> {
    let corpus = exp.task.generate();
    let splits = make_splits(&corpus, exp.per_talk_dev, exp.per_talk_test, exp.seed)?;
    let src_vocab = Vocabulary::build(splits.train.iter().map(|e| &e.src), DEFAULT_MAX_SIZE, 1)?;
    let trg_vocab = Vocabulary::build(splits.train.iter().map(|e| &e.trg), DEFAULT_MAX_SIZE, 1)?;
    let speakers = SpeakerTable::new(corpus.iter().map(|e| e.speaker.clone()));
    let enc = |c: &[ParallelExample]| encode_corpus(c, &src_vocab, &trg_vocab, &speakers);
    let (train, dev, test) = (enc(&splits.train), enc(&splits.dev), enc(&splits.test));

    let probe_train: Vec<Vec<String>> = splits.train.iter().map(|e| e.trg.clone()).collect();
    let probe_labels: Vec<usize> = train.iter().map(|e| e.speaker.unwrap_or(0)).collect();
    let test_labels: Vec<usize> = test.iter().map(|e| e.speaker.unwrap_or(0)).collect();
    let refs: Vec<Vec<String>> = splits.test.iter().map(|e| e.trg.clone()).collect();
    progress("training speaker probe");
    let clf = train_classifier(&probe_train, &probe_labels, speakers.len(), &exp.probe, exp.seed)?;
    let ground_truth_probe = probe_accuracy(&clf, &refs, &test_labels)?;

    let mut modes = Vec::new();
    for &mode in &exp.modes {
        let cfg = ModelConfig::small(exp.dim, src_vocab.len(), trg_vocab.len(), speakers.len(), mode)
            .with_rank(exp.rank);
        let model = Seq2Seq::<f32>::init(cfg, exp.seed)?;
        let mut params = model.params.clone();
        let start = std::time::Instant::now();
        let mut obj = Seq2SeqObjective::new(&model, &train, &dev, exp.train.batch_size, exp.seed)?;
        let log = train_schedule(&mut params, &mut obj, &exp.train, |_, r| {
            progress(&format!("{mode} epoch {} dev ppl {:.3}", r.epoch, r.dev_ppl));
            Ok(())
        })?;
        let train_seconds = start.elapsed().as_secs_f64();
        let trained = Seq2Seq {
            config: model.config.clone(),
            params,
            layout: model.layout.clone(),
        };
        let hyps: Vec<Vec<String>> = test
            .iter()
            .map(|ex| {
                let t = translate(&trained, &ex.src, ex.speaker, exp.beam, None)?;
                Ok(trg_vocab.decode(t.hypothesis.words()))
            })
            .collect::<Result<_>>()?;
        let syn = exp.task.synonym_score(&splits.test, &hyps);
        modes.push(ModeOutcome {
            mode,
            synonym_accuracy: syn.accuracy(),
            probe_accuracy: probe_accuracy(&clf, &hyps, &test_labels)?,
            bleu: corpus_bleu(&hyps, &refs)?.bleu,
            dev_perplexity: log.best().map_or(f64::NAN, |r| r.dev_ppl),
            epochs: log.records.len(),
            train_seconds,
        });
    }
    Ok(LexiconOutcome {
        train_pairs: train.len(),
        test_pairs: test.len(),
        majority_baseline: exp.task.majority_baseline(&splits.test),
        ground_truth_probe,
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_where_possible_and_balanced() {
        let t = LexiconTask::default();
        let codes = t.codes();
        assert_eq!(codes.len(), 20);
        let distinct: std::collections::HashSet<_> = codes.iter().collect();
        assert_eq!(distinct.len(), 16);
        for k in 0..4 {
            assert_eq!(codes.iter().filter(|c| c[k]).count(), 10);
        }
    }

    #[test]
    fn generated_task_shape() {
        let t = LexiconTask::default();
        let c = t.generate();
        assert_eq!(c, t.generate());
        assert_eq!(c.len(), 2000);
        for ex in &c {
            assert_eq!(ex.src.len(), ex.trg.len());
            let nc = ex.src.iter().filter(|w| w.starts_with('c')).count();
            assert!((2..=4).contains(&nc));
        }
        let refs: Vec<Vec<String>> = c.iter().map(|e| e.trg.clone()).collect();
        let s = t.synonym_score(&c, &refs);
        assert_eq!(s.correct, s.total);
        let maj = t.majority_baseline(&c);
        assert!(maj < 0.56, "{maj}");
    }

    #[test]
    fn toy_corpus_shape() {
        let c = toy_corpus(0);
        assert_eq!(c.len(), 200 + 6 + 3);
        assert_eq!(c, toy_corpus(0));
        let speakers: std::collections::BTreeSet<_> = c.iter().map(|e| e.speaker.as_str()).collect();
        assert_eq!(speakers.len(), 5);
    }
}
