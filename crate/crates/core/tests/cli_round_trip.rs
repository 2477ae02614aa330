//! preprocess -> train -> translate -> evaluate -> probe through the real binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use speaker_nmt::cli::{files, EXIT_DATA, EXIT_USAGE};
use speaker_nmt::model::{read_header, AdaptationMode};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_speaker-nmt"));
    c.env_remove("SPEAKER_NMT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_corpus.jsonl")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(data: &Path, out: &Path, mode: &str) {
    run(&[
        "--mode", mode, "--rank", "10", "train", "--data", s(data), "--out", s(out), "--dim", "12",
        "--max-epochs", "4",
    ]);
}

#[test]
fn full_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let data = t.join("data");
    let pre = run(&["preprocess", "--input", s(&toy()), "--out", s(&data)]);
    assert!(String::from_utf8_lossy(&pre.stdout).contains("dev\t20"));

    let (base, fact, fact2) = (t.join("base"), t.join("fact"), t.join("fact2"));
    train(&data, &base, "base");
    train(&data, &fact, "fact_bias");
    train(&data, &fact2, "fact_bias");

    let header = read_header(fact.join(files::CHECKPOINT)).unwrap();
    assert_eq!(header.mode, AdaptationMode::FactBias);
    assert_eq!(header.model.rank, 10);
    assert_eq!(header.run_config["model"]["rank"], 10);
    assert_eq!(header.run_config["seed"], 1);

    // same seed, same final dev perplexity and same checkpoint bytes
    let best = |dir: &Path| {
        let log = fs::read_to_string(dir.join(files::TRAIN_LOG)).unwrap();
        let mut lines = log.lines();
        let head: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(head["run_config"], header.run_config);
        lines
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|r| r["improved"] == true)
            .map(|r| r["dev_ppl"].as_f64().unwrap())
            .fold(f64::INFINITY, f64::min)
    };
    assert!(best(&fact).is_finite());
    assert_eq!(best(&fact), best(&fact2));
    assert_eq!(
        fs::read(fact.join(files::CHECKPOINT)).unwrap(),
        fs::read(fact2.join(files::CHECKPOINT)).unwrap()
    );

    let test = data.join(files::TEST);
    let out = |name: &str| t.join(name);
    run(&["translate", "--model", s(&fact), "--input", s(&test), "--output", s(&out("fact.txt"))]);
    run(&["translate", "--model", s(&fact), "--input", s(&test), "--output", s(&out("again.txt"))]);
    run(&["translate", "--model", s(&base), "--input", s(&test), "--output", s(&out("base.txt"))]);
    run(&["--beam", "1", "translate", "--model", s(&fact), "--input", s(&test), "--output", s(&out("b1.txt"))]);
    run(&["translate", "--greedy", "--model", s(&fact), "--input", s(&test), "--output", s(&out("greedy.txt"))]);
    let read = |name: &str| fs::read_to_string(out(name)).unwrap();
    assert_eq!(read("fact.txt"), read("again.txt"));
    assert_eq!(read("b1.txt"), read("greedy.txt"));
    assert_eq!(read("fact.txt").lines().count(), 20);

    let ev = run(&[
        "evaluate", "--ref", s(&test), "--hyp", &format!("base={}", out("base.txt").display()),
        "--hyp", &format!("fact={}", out("fact.txt").display()), "--model", &format!("fact={}", fact.display()),
        "--resamples", "200", "--out", s(&out("report")),
    ]);
    assert!(String::from_utf8_lossy(&ev.stdout).contains("bootstrap resamples 200, seed 1"));
    let report: serde_json::Value = serde_json::from_str(&read("report.json")).unwrap();
    assert_eq!(report["systems"].as_array().unwrap().len(), 2);
    assert!(report["systems"][1]["perplexity"].as_f64().unwrap().is_finite());
    assert_eq!(report["pairwise"][0]["result"]["resamples"], 200);
    assert_eq!(report["run_config"]["eval"]["resamples"], 200);

    let probe = run(&[
        "probe", "--train", s(&data.join(files::TRAIN)), "--test", s(&test),
        "--hyp", &format!("base={}", out("base.txt").display()),
        "--hyp", &format!("fact={}", out("fact.txt").display()),
    ]);
    let table = String::from_utf8_lossy(&probe.stdout).into_owned();
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(rows, ["ground_truth", "base", "fact"]);
}

#[test]
fn speaker_handling_and_refusals() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let data = t.join("data");
    run(&["preprocess", "--input", s(&toy()), "--out", s(&data)]);
    let model = t.join("full");
    train(&data, &model, "full_bias");

    let input = t.join("in.txt");
    fs::write(&input, "The cat sees the house.\nMy friend likes a dog, really.\n").unwrap();
    let hyp = t.join("hyp.txt");

    let unknown = run(&["translate", "--model", s(&model), "--input", s(&input), "--output", s(&hyp), "--speaker", "stranger"]);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown speaker \"stranger\""));
    assert_eq!(fs::read_to_string(&hyp).unwrap().lines().count(), 2);

    let strict = bin()
        .args(["translate", "--model", s(&model), "--input", s(&input), "--output", s(&hyp)])
        .args(["--speaker", "stranger", "--unknown-speaker", "error"])
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(EXIT_DATA));

    let missing = bin()
        .args(["translate", "--model", s(&model), "--input", s(&input), "--output", s(&hyp)])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no speaker given"));

    // a vocabulary that differs from the one the model was trained with
    let vocab = model.join(files::TRG_VOCAB);
    let mut text = fs::read_to_string(&vocab).unwrap();
    text.push_str("intrus\n");
    fs::write(&vocab, text).unwrap();
    let refused = bin()
        .args(["translate", "--model", s(&model), "--input", s(&input), "--output", s(&hyp), "--speaker", "speaker1"])
        .output()
        .unwrap();
    assert_eq!(refused.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("hash mismatch"));
}

#[test]
fn seed_precedence_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = t.join("run.toml");
    fs::write(&cfg, "seed = 11\n").unwrap();
    let seed_of = |extra_env: Option<&str>, flag: Option<&str>| {
        let out = t.join("d");
        let _ = fs::remove_dir_all(&out);
        let mut c = bin();
        c.args(["--config", s(&cfg)]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        if let Some(e) = extra_env {
            c.env("SPEAKER_NMT_SEED", e);
        }
        let o = c.args(["preprocess", "--input", s(&toy()), "--out", s(&out)]).output().unwrap();
        assert!(o.status.success());
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(files::PREPROCESS_REPORT)).unwrap()).unwrap();
        report["run_config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(None, None), 11);
    assert_eq!(seed_of(Some("12"), None), 12);
    assert_eq!(seed_of(Some("12"), Some("13")), 13);

    let usage = bin().args(["translate"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(EXIT_USAGE));
    let bad_cfg = t.join("bad.toml");
    fs::write(&bad_cfg, "[train]\nlr = 0.0\n").unwrap();
    let invalid = bin().args(["--config", s(&bad_cfg), "params"]).output().unwrap();
    assert_eq!(invalid.status.code(), Some(EXIT_USAGE));
    let missing = bin()
        .args(["train", "--data", s(&t.join("nope")), "--out", s(&t.join("m"))])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_DATA));

    let params = run(&["params", "--mode", "full_bias"]);
    let text = String::from_utf8_lossy(&params.stdout);
    assert!(text.contains("99.45% fewer"));
    assert!(text.contains("speaker.bias"));
}
