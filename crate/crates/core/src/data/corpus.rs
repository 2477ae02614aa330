use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tokenize::{split_pretokenized, tokenize};
use crate::error::{Error, Result};

/// Sentences longer than this (in tokens, either side) are dropped.
pub const MAX_SENTENCE_TOKENS: usize = 60;

/// One record of a speaker-annotated corpus before tokenization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub talk: String,
    pub speaker: String,
    pub src: String,
    pub trg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelExample {
    pub talk: String,
    pub speaker: String,
    pub src: Vec<String>,
    pub trg: Vec<String>,
}

impl ParallelExample {
    pub fn to_raw(&self) -> RawExample {
        RawExample {
            talk: self.talk.clone(),
            speaker: self.speaker.clone(),
            src: self.src.join(" "),
            trg: self.trg.join(" "),
        }
    }
}

pub type ParallelCorpus = Vec<ParallelExample>;

/// Paths of the four aligned plain-text files of the fallback format.
#[derive(Clone, Debug)]
pub struct ParallelTextPaths {
    pub src: PathBuf,
    pub trg: PathBuf,
    pub talk: PathBuf,
    pub speaker: PathBuf,
}

impl ParallelTextPaths {
    /// `<prefix>.src`, `<prefix>.trg`, `<prefix>.talk`, `<prefix>.speaker`.
    pub fn from_prefix(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref().to_string_lossy().into_owned();
        Self {
            src: format!("{p}.src").into(),
            trg: format!("{p}.trg").into(),
            talk: format!("{p}.talk").into(),
            speaker: format!("{p}.speaker").into(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum CorpusFormat {
    Jsonl,
    ParallelText(ParallelTextPaths),
}

pub fn load_corpus(path: impl AsRef<Path>, format: &CorpusFormat) -> Result<Vec<RawExample>> {
    match format {
        CorpusFormat::Jsonl => load_jsonl(path),
        CorpusFormat::ParallelText(paths) => load_parallel_text(paths),
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    talk: Option<String>,
    speaker: Option<String>,
    src: Option<String>,
    trg: Option<String>,
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let rec: JsonRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let field = |v: Option<String>, name: &str| {
            v.ok_or_else(|| parse_err(format!("missing field \"{name}\"")))
        };
        out.push(RawExample {
            talk: field(rec.talk, "talk")?,
            speaker: field(rec.speaker, "speaker")?,
            src: field(rec.src, "src")?,
            trg: field(rec.trg, "trg")?,
        });
    }
    Ok(out)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn load_parallel_text(paths: &ParallelTextPaths) -> Result<Vec<RawExample>> {
    let src = read_lines(&paths.src)?;
    let trg = read_lines(&paths.trg)?;
    let talk = read_lines(&paths.talk)?;
    let speaker = read_lines(&paths.speaker)?;
    for (p, n) in [(&paths.trg, trg.len()), (&paths.talk, talk.len()), (&paths.speaker, speaker.len())] {
        if n != src.len() {
            return Err(Error::Parse {
                path: p.clone(),
                line: n.min(src.len()) + 1,
                message: format!("has {n} lines, source has {}", src.len()),
            });
        }
    }
    for (i, s) in speaker.iter().enumerate() {
        if s.trim().is_empty() {
            return Err(Error::Parse {
                path: paths.speaker.clone(),
                line: i + 1,
                message: "missing speaker".into(),
            });
        }
    }
    Ok(src
        .into_iter()
        .zip(trg)
        .zip(talk.into_iter().zip(speaker))
        .map(|((src, trg), (talk, speaker))| RawExample {
            talk: talk.trim().to_owned(),
            speaker: speaker.trim().to_owned(),
            src,
            trg,
        })
        .collect())
}

/// Writes tokenized pairs with tokens joined by single spaces.
pub fn write_jsonl(path: impl AsRef<Path>, corpus: &[ParallelExample]) -> Result<()> {
    let raw: Vec<RawExample> = corpus.iter().map(ParallelExample::to_raw).collect();
    write_raw_jsonl(path, &raw)
}

pub fn write_raw_jsonl(path: impl AsRef<Path>, corpus: &[RawExample]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in corpus {
        serde_json::to_writer(&mut w, ex)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_pairs: usize,
    pub dropped_empty: usize,
    pub dropped_too_long: usize,
    pub kept_pairs: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct PreprocessOptions {
    pub pretokenized: bool,
    pub max_tokens: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            pretokenized: false,
            max_tokens: MAX_SENTENCE_TOKENS,
        }
    }
}

/// Lowercases, tokenizes and drops pairs with an empty side or a side longer
/// than `max_tokens`. Input order is preserved.
pub fn preprocess(
    raw: &[RawExample],
    opts: PreprocessOptions,
) -> (ParallelCorpus, PreprocessReport) {
    let split = |s: &str| {
        if opts.pretokenized {
            split_pretokenized(s)
        } else {
            tokenize(s)
        }
    };
    let mut report = PreprocessReport {
        input_pairs: raw.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let src = split(&r.src);
        let trg = split(&r.trg);
        if src.is_empty() || trg.is_empty() {
            report.dropped_empty += 1;
        } else if src.len() > opts.max_tokens || trg.len() > opts.max_tokens {
            report.dropped_too_long += 1;
        } else {
            out.push(ParallelExample {
                talk: r.talk.clone(),
                speaker: r.speaker.clone(),
                src,
                trg,
            });
        }
    }
    report.kept_pairs = out.len();
    (out, report)
}
