use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the output layer is conditioned on the speaker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum AdaptationMode {
    /// Speaker-agnostic baseline.
    Base,
    /// A per-speaker pseudo-token forced at the start of the target side.
    SpkToken,
    /// One learned softmax bias vector per speaker.
    FullBias,
    /// Per-speaker bias as a mixture `S·B̃` of `rank` shared bias vectors.
    FactBias,
}

impl AdaptationMode {
    pub const ALL: [AdaptationMode; 4] = [
        AdaptationMode::Base,
        AdaptationMode::SpkToken,
        AdaptationMode::FullBias,
        AdaptationMode::FactBias,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdaptationMode::Base => "base",
            AdaptationMode::SpkToken => "spk_token",
            AdaptationMode::FullBias => "full_bias",
            AdaptationMode::FactBias => "fact_bias",
        }
    }

    pub fn uses_speaker(self) -> bool {
        self != AdaptationMode::Base
    }

    pub fn has_speaker_bias(self) -> bool {
        matches!(self, AdaptationMode::FullBias | AdaptationMode::FactBias)
    }
}

impl fmt::Display for AdaptationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdaptationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdaptationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// What to do when the speaker of an input is not in the speaker table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum UnknownSpeakerPolicy {
    Error,
    /// Decode with no speaker bias (or the UNK id in place of a speaker token).
    #[default]
    ZeroBias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_hidden: usize,
    pub d_attn: usize,
    pub src_vocab: usize,
    /// Target word vocabulary, specials included, speaker tokens excluded.
    pub trg_vocab: usize,
    pub num_speakers: usize,
    pub mode: AdaptationMode,
    pub rank: usize,
    pub lstm_dropout: f64,
    pub output_dropout: f64,
    pub label_smoothing: f64,
    pub word_dropout: f64,
    pub unknown_speaker: UnknownSpeakerPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_emb: 512,
            d_hidden: 512,
            d_attn: 256,
            src_vocab: 40_000,
            trg_vocab: 40_000,
            num_speakers: 1,
            mode: AdaptationMode::Base,
            rank: 10,
            lstm_dropout: 0.2,
            output_dropout: 0.2,
            label_smoothing: 0.1,
            word_dropout: 0.1,
            unknown_speaker: UnknownSpeakerPolicy::ZeroBias,
        }
    }
}

impl ModelConfig {
    /// Full-size dimensions with the given vocabulary and speaker counts.
    pub fn full_size(
        src_vocab: usize,
        trg_vocab: usize,
        num_speakers: usize,
        mode: AdaptationMode,
    ) -> Self {
        Self {
            src_vocab,
            trg_vocab,
            num_speakers,
            mode,
            ..Self::default()
        }
    }

    /// Small dense dimensions for fast experiments (`d_emb = d_h = d`, `d_a = d/2`).
    pub fn small(
        d: usize,
        src_vocab: usize,
        trg_vocab: usize,
        num_speakers: usize,
        mode: AdaptationMode,
    ) -> Self {
        Self {
            d_emb: d,
            d_hidden: d,
            d_attn: (d / 2).max(1),
            src_vocab,
            trg_vocab,
            num_speakers,
            mode,
            ..Self::default()
        }
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    /// Disables every stochastic regularizer.
    pub fn without_dropout(mut self) -> Self {
        self.lstm_dropout = 0.0;
        self.output_dropout = 0.0;
        self.word_dropout = 0.0;
        self
    }

    /// Rows of the target embedding / softmax matrix.
    pub fn output_vocab(&self) -> usize {
        match self.mode {
            AdaptationMode::SpkToken => self.trg_vocab + self.num_speakers,
            _ => self.trg_vocab,
        }
    }

    pub fn speaker_token(&self, speaker: usize) -> usize {
        self.trg_vocab + speaker
    }

    pub fn is_speaker_token(&self, id: usize) -> bool {
        self.mode == AdaptationMode::SpkToken && id >= self.trg_vocab
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_emb", self.d_emb),
            ("d_hidden", self.d_hidden),
            ("d_attn", self.d_attn),
            ("src_vocab", self.src_vocab),
            ("trg_vocab", self.trg_vocab),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.mode.uses_speaker() && self.num_speakers == 0 {
            return Err(Error::Config(format!("mode {} needs at least one speaker", self.mode)));
        }
        if self.mode == AdaptationMode::FactBias && self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        for (name, p) in [
            ("lstm_dropout", self.lstm_dropout),
            ("output_dropout", self.output_dropout),
            ("label_smoothing", self.label_smoothing),
            ("word_dropout", self.word_dropout),
        ] {
            if !(0.0..1.0).contains(&p) && !(name == "word_dropout" && p == 1.0) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}
