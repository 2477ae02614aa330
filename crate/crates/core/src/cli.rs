//! Command-line front end: `preprocess`, `train`, `translate`, `evaluate`,
//! `probe` and `params`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Overrides, RunConfig, SEED_ENV};
use crate::data::{
    corpus_stats, encode_corpus, filter_talks, load_corpus, load_jsonl, make_splits, preprocess,
    split_pretokenized, talk_count, write_jsonl, CorpusFormat, CorpusStats, ParallelExample,
    ParallelTextPaths, PreprocessOptions, PreprocessReport, SpeakerTable, Vocabulary,
};
use crate::decode::{default_max_len, greedy, translate, ModelScorer};
use crate::error::{Error, Result};
use crate::eval::{
    corpus_bleu, paired_bootstrap, probe_accuracy, train_classifier, EvalReport, PairwiseTest,
    SystemReport,
};
use crate::model::{
    count_params, factored_reduction, format_counts, load_verified, save_checkpoint,
    AdaptationMode, CheckpointHeader, ModelConfig, Seq2Seq, UnknownSpeakerPolicy,
};
use crate::rng;
use crate::train::{train_schedule, validate_perplexity, Seq2SeqObjective};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// File names inside a preprocessed data directory and a model directory.
pub mod files {
    pub const TRAIN: &str = "train.jsonl";
    pub const DEV: &str = "dev.jsonl";
    pub const TEST: &str = "test.jsonl";
    pub const SRC_VOCAB: &str = "vocab.src";
    pub const TRG_VOCAB: &str = "vocab.trg";
    pub const SPEAKERS: &str = "speakers.txt";
    pub const PREPROCESS_REPORT: &str = "preprocess.json";
    pub const CHECKPOINT: &str = "model.ckpt";
    pub const TRAIN_LOG: &str = "train_log.jsonl";
    pub const RUN_CONFIG: &str = "run.toml";
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "speaker-nmt", version, about = "Speaker-personalized neural machine translation")]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the environment and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub mode: Option<AdaptationMode>,
    /// Number of shared bias vectors in fact_bias mode.
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    #[arg(long, global = true)]
    pub beam: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize, filter and split a speaker-annotated corpus.
    Preprocess(PreprocessArgs),
    /// Train a model on a preprocessed data directory.
    Train(TrainArgs),
    /// Translate a file with a trained model.
    Translate(TranslateArgs),
    /// Score system outputs with BLEU and paired bootstrap tests.
    Evaluate(EvaluateArgs),
    /// Train the speaker classifier and report its accuracy on each system.
    Probe(ProbeArgs),
    /// Print the parameter accounting table.
    Params(ParamsArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// JSONL corpus with talk, speaker, src and trg fields.
    #[arg(long, required_unless_present = "parallel_prefix", conflicts_with = "parallel_prefix")]
    pub input: Option<PathBuf>,
    /// Prefix of aligned `.src`, `.trg`, `.talk` and `.speaker` files.
    #[arg(long)]
    pub parallel_prefix: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Input is already tokenized; only split on whitespace and lowercase.
    #[arg(long)]
    pub pretokenized: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `preprocess`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sets d_emb = d_hidden = DIM and d_attn = DIM / 2.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Skip the SGD finetuning phase.
    #[arg(long)]
    pub no_finetune: bool,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Plain text (one sentence per line) or JSONL with `src` and `speaker` fields.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Speaker of every line of a plain-text input.
    #[arg(long)]
    pub speaker: Option<String>,
    /// Greedy decoding instead of beam search.
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub pretokenized: bool,
    /// Overrides the policy the model was trained with.
    #[arg(long, value_enum)]
    pub unknown_speaker: Option<UnknownSpeakerPolicy>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// References: a JSONL split (its `trg` field) or plain text, tokenized.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// A system output as NAME=PATH (or just PATH); repeatable.
    #[arg(long = "hyp", required = true)]
    pub hyps: Vec<String>,
    /// A model directory as NAME=DIR for test perplexity; needs JSONL references.
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Writes PREFIX.json and PREFIX.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub resamples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Training split whose target sentences and speakers train the classifier.
    #[arg(long)]
    pub train: PathBuf,
    /// Test split supplying ground-truth targets and speakers.
    #[arg(long)]
    pub test: PathBuf,
    /// A system output aligned with the test split, as NAME=PATH; repeatable.
    #[arg(long = "hyp")]
    pub hyps: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 40_000)]
    pub src_vocab: usize,
    #[arg(long, default_value_t = 40_000)]
    pub trg_vocab: usize,
    #[arg(long, default_value_t = 1887)]
    pub speakers: usize,
}

/// Where warnings and results go; tests pass buffers.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

fn write_out(w: &mut dyn Write, s: &str) -> Result<()> {
    w.write_all(s.as_bytes())
        .map_err(|e| Error::io("<output>", e))
}

fn resolve_config(cli: &Cli, env_seed: Option<&str>) -> Result<RunConfig> {
    let s = &cli.shared;
    let mut flags = Overrides {
        seed: s.seed,
        mode: s.mode,
        rank: s.rank,
        beam: s.beam,
        ..Default::default()
    };
    if let Command::Train(t) = &cli.command {
        flags.max_epochs = t.max_epochs;
        flags.no_finetune = t.no_finetune;
    }
    let mut cfg = RunConfig::resolve(s.config.as_deref(), env_seed, &flags)?;
    match &cli.command {
        Command::Preprocess(p) if p.pretokenized => cfg.data.pretokenized = true,
        Command::Train(TrainArgs { dim: Some(d), .. }) => {
            cfg.model.d_emb = *d;
            cfg.model.d_hidden = *d;
            cfg.model.d_attn = (*d / 2).max(1);
            cfg.validate()?;
        }
        Command::Evaluate(EvaluateArgs { resamples: Some(r), .. }) => {
            cfg.eval.resamples = *r;
            cfg.validate()?;
        }
        _ => {}
    }
    Ok(cfg)
}

/// Runs a parsed command line, reading the seed override from the process environment.
pub fn run(cli: &Cli, io: &mut Io<'_>) -> Result<()> {
    let env_seed = std::env::var(SEED_ENV).ok();
    run_with_env(cli, env_seed.as_deref(), io)
}

pub fn run_with_env(cli: &Cli, env_seed: Option<&str>, io: &mut Io<'_>) -> Result<()> {
    let cfg = resolve_config(cli, env_seed)?;
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(&cfg, a, io),
        Command::Train(a) => cmd_train(&cfg, a, io),
        Command::Translate(a) => cmd_translate(&cfg, a, &cli.shared, io),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a, io),
        Command::Probe(a) => cmd_probe(&cfg, a, io),
        Command::Params(a) => cmd_params(&cfg, a, &cli.shared, io),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json_pretty(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct PreprocessSummary<'a> {
    run_config: serde_json::Value,
    report: &'a PreprocessReport,
    talks_before_filter: usize,
    talks_removed: usize,
    pairs_removed_with_talks: usize,
    stats: &'a CorpusStats,
    src_vocab: usize,
    trg_vocab: usize,
}

fn cmd_preprocess(cfg: &RunConfig, a: &PreprocessArgs, io: &mut Io<'_>) -> Result<()> {
    let (path, format) = match (&a.input, &a.parallel_prefix) {
        (Some(p), _) => (p.clone(), CorpusFormat::Jsonl),
        (None, Some(prefix)) => (
            prefix.clone(),
            CorpusFormat::ParallelText(ParallelTextPaths::from_prefix(prefix)),
        ),
        (None, None) => return Err(Error::Config("give --input or --parallel-prefix".into())),
    };
    let raw = load_corpus(&path, &format)?;
    if raw.is_empty() {
        return Err(Error::Data(format!("{}: no records", path.display())));
    }
    let d = &cfg.data;
    let (clean, report) = preprocess(
        &raw,
        PreprocessOptions {
            pretokenized: d.pretokenized,
            max_tokens: d.max_tokens,
        },
    );
    let kept = filter_talks(&clean, d.min_talk_sentences);
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "no talk has at least {} usable pairs",
            d.min_talk_sentences
        )));
    }
    let splits = make_splits(
        &kept,
        d.per_talk_dev,
        d.per_talk_test,
        rng::derive_seed(cfg.seed, "splits"),
    )?;
    let src_vocab =
        Vocabulary::build(splits.train.iter().map(|e| &e.src), d.max_vocab, d.min_count)?;
    let trg_vocab =
        Vocabulary::build(splits.train.iter().map(|e| &e.trg), d.max_vocab, d.min_count)?;
    let speakers = SpeakerTable::new(kept.iter().map(|e| e.speaker.clone()));
    let stats = corpus_stats(&splits);
    let summary = PreprocessSummary {
        run_config: cfg.to_json(),
        report: &report,
        talks_before_filter: talk_count(&clean),
        talks_removed: talk_count(&clean) - talk_count(&kept),
        pairs_removed_with_talks: clean.len() - kept.len(),
        stats: &stats,
        src_vocab: src_vocab.len(),
        trg_vocab: trg_vocab.len(),
    };

    let out = &a.out;
    create_dir(out)?;
    write_jsonl(out.join(files::TRAIN), &splits.train)?;
    write_jsonl(out.join(files::DEV), &splits.dev)?;
    write_jsonl(out.join(files::TEST), &splits.test)?;
    src_vocab.save(out.join(files::SRC_VOCAB))?;
    trg_vocab.save(out.join(files::TRG_VOCAB))?;
    speakers.save(out.join(files::SPEAKERS))?;
    write_file(&out.join(files::PREPROCESS_REPORT), to_json_pretty(&summary)?)?;

    write_out(
        io.out,
        &format!(
            "talks\t{}\nspeakers\t{}\ntrain\t{}\ndev\t{}\ntest\t{}\navg sentences/talk\t{:.1}\nstd sentences/talk\t{:.1}\n\
             dropped empty\t{}\ndropped too long\t{}\ntalks removed\t{}\n",
            stats.talks,
            stats.speakers,
            stats.train,
            stats.dev,
            stats.test,
            stats.avg_sentences_per_talk,
            stats.std_sentences_per_talk,
            report.dropped_empty,
            report.dropped_too_long,
            summary.talks_removed,
        ),
    )
}

/// Reads a split written by `preprocess`; its text is already tokenized.
pub fn load_split(path: impl AsRef<Path>) -> Result<Vec<ParallelExample>> {
    Ok(load_jsonl(path)?
        .into_iter()
        .map(|r| ParallelExample {
            src: split_pretokenized(&r.src),
            trg: split_pretokenized(&r.trg),
            talk: r.talk,
            speaker: r.speaker,
        })
        .collect())
}

struct Tables {
    src: Vocabulary,
    trg: Vocabulary,
    speakers: SpeakerTable,
}

impl Tables {
    fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            src: Vocabulary::load(dir.join(files::SRC_VOCAB))?,
            trg: Vocabulary::load(dir.join(files::TRG_VOCAB))?,
            speakers: SpeakerTable::load(dir.join(files::SPEAKERS))?,
        })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        self.src.save(dir.join(files::SRC_VOCAB))?;
        self.trg.save(dir.join(files::TRG_VOCAB))?;
        self.speakers.save(dir.join(files::SPEAKERS))
    }
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs, io: &mut Io<'_>) -> Result<()> {
    let tables = Tables::load(&a.data)?;
    let train = load_split(a.data.join(files::TRAIN))?;
    let dev = load_split(a.data.join(files::DEV))?;
    let model_cfg = ModelConfig {
        src_vocab: tables.src.len(),
        trg_vocab: tables.trg.len(),
        num_speakers: tables.speakers.len(),
        ..cfg.model.clone()
    };
    let enc = |c: &[ParallelExample]| encode_corpus(c, &tables.src, &tables.trg, &tables.speakers);
    let (train, dev) = (enc(&train), enc(&dev));
    if let Some(i) = train.iter().chain(&dev).position(|e| e.speaker.is_none()) {
        return Err(Error::Data(format!(
            "example {i} has a speaker missing from {}",
            files::SPEAKERS
        )));
    }

    let model = Seq2Seq::<f32>::init(model_cfg, cfg.seed)?;
    let header = CheckpointHeader::new(
        &model.config,
        &tables.src,
        &tables.trg,
        &tables.speakers,
        cfg.to_json(),
    );
    create_dir(&a.out)?;
    tables.save(&a.out)?;
    write_file(&a.out.join(files::RUN_CONFIG), cfg.to_toml_string()?)?;
    let ckpt = a.out.join(files::CHECKPOINT);

    let mut params = model.params.clone();
    let mut obj = Seq2SeqObjective::new(&model, &train, &dev, cfg.train.batch_size, cfg.seed)?;
    let err = &mut *io.err;
    let log = train_schedule(&mut params, &mut obj, &cfg.train, |p, r| {
        let _ = writeln!(err, "{} epoch {}: dev ppl {:.4}, saving", r.phase, r.epoch, r.dev_ppl);
        let snapshot = Seq2Seq {
            config: model.config.clone(),
            params: p.clone(),
            layout: model.layout.clone(),
        };
        save_checkpoint(&ckpt, &snapshot, &header)
    })?;
    let header_json = serde_json::json!({ "run_config": cfg.to_json() });
    log.write_jsonl(a.out.join(files::TRAIN_LOG), &header_json)?;
    let best = log
        .best()
        .ok_or_else(|| Error::Data("training never produced a finite dev perplexity".into()))?;
    write_out(
        io.out,
        &format!(
            "mode\t{}\nepochs\t{}\nbest dev perplexity\t{:.4}\ncheckpoint\t{}\n",
            model.config.mode,
            log.records.len(),
            best.dev_ppl,
            ckpt.display()
        ),
    )
}

struct TranslateInput {
    tokens: Vec<String>,
    speaker: Option<String>,
}

fn read_translate_input(path: &Path, pretokenized: bool) -> Result<Vec<TranslateInput>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split = |s: &str| {
        if pretokenized {
            split_pretokenized(s)
        } else {
            crate::data::tokenize(s)
        }
    };
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    text.lines()
        .enumerate()
        .filter(|(_, l)| !(is_jsonl && l.trim().is_empty()))
        .map(|(i, line)| {
            if !is_jsonl {
                return Ok(TranslateInput {
                    tokens: split(line),
                    speaker: None,
                });
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            let src = v
                .get("src")
                .and_then(|s| s.as_str())
                .ok_or_else(|| parse_err("missing string field \"src\"".into()))?;
            Ok(TranslateInput {
                tokens: split(src),
                speaker: v.get("speaker").and_then(|s| s.as_str()).map(str::to_owned),
            })
        })
        .collect()
}

fn cmd_translate(cfg: &RunConfig, a: &TranslateArgs, shared: &SharedArgs, io: &mut Io<'_>) -> Result<()> {
    let tables = Tables::load(&a.model)?;
    let mut model =
        load_verified::<f32>(a.model.join(files::CHECKPOINT), &tables.src, &tables.trg, &tables.speakers)?;
    if let Some(p) = a.unknown_speaker {
        model.config.unknown_speaker = p;
    }
    let mode = model.config.mode;
    let beam = shared.beam.unwrap_or(cfg.decode.beam);
    let inputs = read_translate_input(&a.input, a.pretokenized)?;

    let mut lines = String::new();
    for (i, inp) in inputs.iter().enumerate() {
        let speaker_name = inp.speaker.as_deref().or(a.speaker.as_deref());
        let speaker = match speaker_name {
            _ if !mode.uses_speaker() => None,
            None => {
                return Err(Error::Data(format!(
                    "input {}: no speaker given and mode {mode} needs one (use --speaker or a speaker field)",
                    i + 1
                )))
            }
            Some(name) => match tables.speakers.index(name) {
                Some(s) => Some(s),
                None if model.config.unknown_speaker == UnknownSpeakerPolicy::Error => {
                    return Err(Error::UnknownSpeaker(name.to_owned()))
                }
                None => {
                    let _ = writeln!(
                        io.err,
                        "warning: input {}: unknown speaker {name:?}, decoding without speaker adaptation",
                        i + 1
                    );
                    None
                }
            },
        };
        if inp.tokens.is_empty() {
            let _ = writeln!(io.err, "warning: input {}: empty source line", i + 1);
            lines.push('\n');
            continue;
        }
        let src = tables.src.encode(&inp.tokens);
        let max_len = a
            .max_len
            .or(cfg.decode.max_len)
            .unwrap_or(default_max_len(src.len()));
        let hyp = if a.greedy {
            greedy(&ModelScorer::new(&model, &src, speaker)?, max_len)?
        } else {
            translate(&model, &src, speaker, beam, Some(max_len))?.hypothesis
        };
        lines.push_str(&tables.trg.decode(hyp.words()).join(" "));
        lines.push('\n');
    }
    write_file(&a.output, lines)?;
    write_out(io.out, &format!("translated\t{}\noutput\t{}\n", inputs.len(), a.output.display()))
}

/// Tokenized references: the `trg` field of a JSONL split, or whitespace-split lines.
fn read_references(path: &Path) -> Result<(Vec<Vec<String>>, Option<Vec<ParallelExample>>)> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let split = load_split(path)?;
        Ok((split.iter().map(|e| e.trg.clone()).collect(), Some(split)))
    } else {
        Ok((read_tokenized_lines(path)?, None))
    }
}

fn read_tokenized_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(split_pretokenized).collect())
}

/// `NAME=PATH`, or a bare path named after its file stem.
fn named_path(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_owned(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(arg);
            let name = p
                .file_stem()
                .map_or_else(|| arg.to_owned(), |s| s.to_string_lossy().into_owned());
            (name, p)
        }
    }
}

fn read_system(arg: &str, expected: usize) -> Result<(String, Vec<Vec<String>>)> {
    let (name, path) = named_path(arg);
    let hyps = read_tokenized_lines(&path)?;
    if hyps.len() != expected {
        return Err(Error::Data(format!(
            "{}: {} lines, references have {expected}",
            path.display(),
            hyps.len()
        )));
    }
    Ok((name, hyps))
}

fn write_report(report: &EvalReport, prefix: Option<&Path>) -> Result<()> {
    if let Some(p) = prefix {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        let with = |ext: &str| {
            let mut s = p.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        report.write(with(".json"), with(".tsv"))?;
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, a: &EvaluateArgs, io: &mut Io<'_>) -> Result<()> {
    let (refs, split) = read_references(&a.reference)?;
    let systems: Vec<(String, Vec<Vec<String>>)> = a
        .hyps
        .iter()
        .map(|h| read_system(h, refs.len()))
        .collect::<Result<_>>()?;

    let mut perplexities = std::collections::HashMap::new();
    for arg in &a.models {
        let (name, dir) = named_path(arg);
        let split = split.as_ref().ok_or_else(|| {
            Error::Config("--model needs JSONL references with source sentences".into())
        })?;
        let tables = Tables::load(&dir)?;
        let model = load_verified::<f32>(dir.join(files::CHECKPOINT), &tables.src, &tables.trg, &tables.speakers)?;
        let enc = encode_corpus(split, &tables.src, &tables.trg, &tables.speakers);
        perplexities.insert(name, validate_perplexity(&model, &model.params, &enc)?);
    }

    let mut report = EvalReport {
        run_config: cfg.to_json(),
        ..Default::default()
    };
    for (name, hyps) in &systems {
        report.systems.push(SystemReport {
            name: name.clone(),
            bleu: Some(corpus_bleu(hyps, &refs)?),
            perplexity: perplexities.get(name).copied(),
            probe_accuracy: None,
            sentences: hyps.len(),
        });
    }
    let seed = rng::derive_seed(cfg.seed, "evaluate");
    for i in 0..systems.len() {
        for j in i + 1..systems.len() {
            let (a_ix, b_ix) = if report.systems[j].bleu.as_ref().map(|b| b.bleu)
                > report.systems[i].bleu.as_ref().map(|b| b.bleu)
            {
                (j, i)
            } else {
                (i, j)
            };
            let result = paired_bootstrap(
                &systems[a_ix].1,
                &systems[b_ix].1,
                &refs,
                cfg.eval.resamples,
                seed,
            )?;
            report.pairwise.push(PairwiseTest {
                better: systems[a_ix].0.clone(),
                worse: systems[b_ix].0.clone(),
                result,
            });
        }
    }
    write_report(&report, a.out.as_deref())?;
    write_out(io.out, &report.to_tsv())?;
    if !report.pairwise.is_empty() {
        write_out(
            io.out,
            &format!("\nbootstrap resamples {}, seed {}\n", cfg.eval.resamples, cfg.seed),
        )?;
    }
    Ok(())
}

fn cmd_probe(cfg: &RunConfig, a: &ProbeArgs, io: &mut Io<'_>) -> Result<()> {
    let train = load_split(&a.train)?;
    let test = load_split(&a.test)?;
    let speakers = SpeakerTable::new(train.iter().map(|e| e.speaker.clone()));
    if speakers.len() < 2 {
        return Err(Error::Data(format!(
            "{}: the probe needs at least two speakers, found {}",
            a.train.display(),
            speakers.len()
        )));
    }
    let labels = |c: &[ParallelExample]| -> Result<Vec<usize>> {
        c.iter()
            .map(|e| speakers.index(&e.speaker).ok_or_else(|| Error::UnknownSpeaker(e.speaker.clone())))
            .collect()
    };
    let train_sents: Vec<Vec<String>> = train.iter().map(|e| e.trg.clone()).collect();
    let clf = train_classifier(
        &train_sents,
        &labels(&train)?,
        speakers.len(),
        &cfg.probe,
        rng::derive_seed(cfg.seed, "probe"),
    )?;
    let test_labels = labels(&test)?;
    let refs: Vec<Vec<String>> = test.iter().map(|e| e.trg.clone()).collect();

    let mut report = EvalReport {
        run_config: cfg.to_json(),
        ..Default::default()
    };
    let mut row = |name: String, sents: &[Vec<String>]| -> Result<()> {
        report.systems.push(SystemReport {
            name,
            bleu: None,
            perplexity: None,
            probe_accuracy: Some(probe_accuracy(&clf, sents, &test_labels)?),
            sentences: sents.len(),
        });
        Ok(())
    };
    row("ground_truth".into(), &refs)?;
    for arg in &a.hyps {
        let (name, hyps) = read_system(arg, refs.len())?;
        row(name, &hyps)?;
    }
    write_report(&report, a.out.as_deref())?;
    write_out(io.out, &report.probe_table())
}

fn cmd_params(cfg: &RunConfig, a: &ParamsArgs, shared: &SharedArgs, io: &mut Io<'_>) -> Result<()> {
    let base = ModelConfig {
        src_vocab: a.src_vocab,
        trg_vocab: a.trg_vocab,
        num_speakers: a.speakers,
        ..cfg.model.clone()
    };
    let mut out = String::new();
    let modes: Vec<AdaptationMode> = match shared.mode {
        Some(m) => vec![m],
        None => AdaptationMode::ALL.to_vec(),
    };
    for mode in modes {
        let counts = count_params(&ModelConfig { mode, ..base.clone() });
        out.push_str(&format!("== {mode} ==\n"));
        out.push_str(&format_counts(&counts));
        out.push('\n');
    }
    let full = count_params(&ModelConfig {
        mode: AdaptationMode::FullBias,
        ..base.clone()
    });
    let fact = count_params(&ModelConfig {
        mode: AdaptationMode::FactBias,
        ..base.clone()
    });
    let reduction = factored_reduction(base.num_speakers, base.trg_vocab, base.rank);
    out.push_str(&format!(
        "fact_bias (r = {}) vs full_bias adaptation parameters: {} vs {}, {:.2}% fewer\n",
        base.rank,
        fact.adaptation_total,
        full.adaptation_total,
        100.0 * reduction
    ));
    write_out(io.out, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("speaker-nmt").chain(args.iter().copied())).unwrap()
    }

    fn run_capture(args: &[&str]) -> (Result<()>, String, String) {
        let cli = parse(args);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let r = run_with_env(
            &cli,
            None,
            &mut Io {
                out: &mut out,
                err: &mut err,
            },
        );
        (r, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn params_prints_reductions() {
        let (r, out, _) = run_capture(&["params"]);
        r.unwrap();
        assert!(out.contains("99.45% fewer"), "{out}");
        let (_, out, _) = run_capture(&["params", "--speakers", "1670"]);
        assert!(out.contains("99.38% fewer"), "{out}");
        let (_, out, _) = run_capture(&["params", "--mode", "base"]);
        assert!(out.contains("== base ==") && !out.contains("== full_bias =="));
        let per_speaker = out.lines().find(|l| l.starts_with("per speaker ")).unwrap();
        assert!(per_speaker.trim_end().ends_with(" 0"), "{per_speaker}");
    }

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::NonScalarLoss(vec![2])), EXIT_INTERNAL);
        assert!(Cli::try_parse_from(["speaker-nmt", "params", "--mode", "nope"]).is_err());
    }

    #[test]
    fn named_paths() {
        assert_eq!(named_path("base=out/a.txt"), ("base".into(), PathBuf::from("out/a.txt")));
        assert_eq!(named_path("out/full.txt"), ("full".into(), PathBuf::from("out/full.txt")));
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("empty.jsonl");
        fs::write(&input, "").unwrap();
        let out = dir.path().join("processed");
        let (r, _, _) = run_capture(&[
            "preprocess",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let e = r.unwrap_err();
        assert_eq!(exit_code(&e), EXIT_DATA);
        assert!(!out.exists());
    }

    #[test]
    fn evaluate_identity_and_line_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let refs = dir.path().join("ref.txt");
        fs::write(&refs, "a b c d e\nf g h i\n").unwrap();
        let short = dir.path().join("short.txt");
        fs::write(&short, "a b c d e\n").unwrap();
        let prefix = dir.path().join("report");
        let (r, out, _) = run_capture(&[
            "evaluate",
            "--ref",
            refs.to_str().unwrap(),
            "--hyp",
            &format!("x={}", refs.display()),
            "--hyp",
            &format!("y={}", refs.display()),
            "--resamples",
            "200",
            "--out",
            prefix.to_str().unwrap(),
        ]);
        r.unwrap();
        assert!(out.contains("x\t2\t100.00"), "{out}");
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        let pair = &json["pairwise"][0]["result"];
        assert_eq!(pair["resamples"], 200);
        assert_eq!(pair["p_value"], 1.0);
        assert_eq!(json["run_config"]["seed"], 1);
        assert!(dir.path().join("report.tsv").exists());

        let (r, _, _) = run_capture(&[
            "evaluate",
            "--ref",
            refs.to_str().unwrap(),
            "--hyp",
            short.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&r.unwrap_err()), EXIT_DATA);
    }
}
