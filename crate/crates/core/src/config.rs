//! Run configuration shared by every subcommand.
//!
//! Values are resolved in this order, later entries winning: built-in
//! defaults, a TOML file, the `SPEAKER_NMT_SEED` environment variable, and
//! command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    DEFAULT_MAX_SIZE, DEFAULT_MIN_COUNT, MAX_SENTENCE_TOKENS, MIN_TALK_SENTENCES, PER_TALK_DEV,
    PER_TALK_TEST,
};
use crate::error::{Error, Result};
use crate::eval::{ClassifierConfig, DEFAULT_RESAMPLES};
use crate::model::{AdaptationMode, ModelConfig};
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "SPEAKER_NMT_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub pretokenized: bool,
    pub max_tokens: usize,
    pub min_talk_sentences: usize,
    pub per_talk_dev: usize,
    pub per_talk_test: usize,
    pub max_vocab: usize,
    pub min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            pretokenized: false,
            max_tokens: MAX_SENTENCE_TOKENS,
            min_talk_sentences: MIN_TALK_SENTENCES,
            per_talk_dev: PER_TALK_DEV,
            per_talk_test: PER_TALK_TEST,
            max_vocab: DEFAULT_MAX_SIZE,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Defaults to `2 * source length + 10` when unset.
    pub max_len: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam: 5, max_len: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    /// Vocabulary and speaker counts are filled in from the data at train time.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub probe: ClassifierConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            probe: ClassifierConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Flag values that take precedence over everything else. `None` leaves the
/// underlying value alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<AdaptationMode>,
    pub rank: Option<usize>,
    pub beam: Option<usize>,
    pub max_epochs: Option<usize>,
    pub no_finetune: bool,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes to JSON")
    }

    /// Applies the file, environment and flag layers on top of the defaults.
    /// `env_seed` is the raw value of [`SEED_ENV`], if set.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, flags: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(m) = flags.mode {
            cfg.model.mode = m;
        }
        if let Some(r) = flags.rank {
            cfg.model.rank = r;
        }
        if let Some(b) = flags.beam {
            cfg.decode.beam = b;
        }
        if let Some(e) = flags.max_epochs {
            cfg.train.max_epochs = e;
        }
        if flags.no_finetune {
            cfg.train.finetune = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.decode.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        if self.data.max_tokens == 0 || self.data.max_vocab <= crate::data::NUM_SPECIALS {
            return Err(Error::Config("max_tokens and max_vocab are too small".into()));
        }
        if self.eval.resamples < 100 {
            return Err(Error::Config("eval.resamples must be at least 100".into()));
        }
        if self.probe.dim == 0 || self.probe.batch_size == 0 {
            return Err(Error::Config("probe dim and batch_size must be at least 1".into()));
        }
        let mut m = self.model.clone();
        m.num_speakers = m.num_speakers.max(1);
        m.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c = RunConfig::from_toml_str("seed = 9\n[model]\nmode = \"fact_bias\"\nrank = 4\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.mode, AdaptationMode::FactBias);
        assert_eq!(c.model.rank, 4);
        assert_eq!(c.model.d_emb, 512);
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("sede = 3\n").is_err());
        assert!(RunConfig::from_toml_str("[decode]\nbeem = 3\n").is_err());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 5\n[decode]\nbeam = 3\n").unwrap();
        let none = Overrides::default();

        assert_eq!(RunConfig::resolve(None, None, &none).unwrap().seed, DEFAULT_SEED);
        assert_eq!(RunConfig::resolve(Some(&p), None, &none).unwrap().seed, 5);
        assert_eq!(RunConfig::resolve(Some(&p), Some("6"), &none).unwrap().seed, 6);
        let flags = Overrides {
            seed: Some(7),
            beam: Some(8),
            ..Default::default()
        };
        let c = RunConfig::resolve(Some(&p), Some("6"), &flags).unwrap();
        assert_eq!((c.seed, c.decode.beam), (7, 8));
        assert_eq!(RunConfig::resolve(Some(&p), None, &none).unwrap().decode.beam, 3);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad_env = RunConfig::resolve(None, Some("abc"), &Overrides::default());
        assert!(matches!(bad_env, Err(Error::Config(_))));
        let zero_beam = Overrides {
            beam: Some(0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, None, &zero_beam).is_err());
        assert!(RunConfig::from_toml_str("[train]\nlr = -1.0\n").unwrap().validate().is_err());
    }
}
