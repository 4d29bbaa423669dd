use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use disagree_gat::corpus::{CommentPair, Dataset, Label};

const BIN: &str = env!("CARGO_BIN_EXE_disagree-gat");

const ENTITIES: &str = "carbon tax\nsolar\ncoal\nGreta\n";

fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let subjects = ["the carbon tax", "solar", "coal", "Greta"];
    let moods = ["good", "bad", "great", "terrible"];
    let pairs = (0..48)
        .map(|i| {
            let s = subjects[i % 4];
            let (a, b) = (moods[i % 4], moods[(i / 4) % 4]);
            let label = Label::ALL[(i / 2) % 3];
            CommentPair::new(
                format!("p{i}"),
                format!("c{}", 2 * i),
                format!("c{}", 2 * i + 1),
                format!("Honestly I think {s} is {a} for the planet and for all of us in the long run"),
                format!("Reply {i}: no, {s} looks {b} to me whatever the experts keep saying about it"),
                label,
            )
        })
        .collect();
    let pairs_path = dir.join("pairs.csv");
    Dataset::new(pairs, "fixture").unwrap().write_csv(&pairs_path).unwrap();
    let entities_path = dir.join("entities.txt");
    fs::write(&entities_path, ENTITIES).unwrap();
    (pairs_path, entities_path)
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("DISAGREE_GAT_THREADS")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = run(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn error_json(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not json ({e}): {stderr}"))
}

fn pipeline(out: &Path, pairs: &Path, entities: &Path, extra: &[&str]) {
    let mut ingest = vec!["ingest", "--pairs", pairs.to_str().unwrap(), "--entities", entities.to_str().unwrap()];
    ingest.extend_from_slice(extra);
    ok(out, &ingest);
    for stage in [&["featurize"][..], &["build-graph"], &["train", "--max-epochs", "4"], &["evaluate"], &["attention", "--bins", "5"], &["entity-report"]] {
        let mut args = stage.to_vec();
        args.extend_from_slice(extra);
        ok(out, &args);
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn rerunning_the_pipeline_rewrites_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, entities) = fixture(dir.path());
    let out = dir.path().join("out");
    pipeline(&out, &pairs, &entities, &[]);
    let first = snapshot(&out);
    for name in [
        "pairs.csv",
        "entities.txt",
        "stats.json",
        "features.csv",
        "embeddings.emb",
        "graph.jsonl",
        "splits.json",
        "checkpoint.json",
        "train_log.csv",
        "train_log.json",
        "metrics.csv",
        "metrics.json",
        "predictions.csv",
        "attention.csv",
        "attention_histogram.csv",
        "entity_report.csv",
        "entity_quartiles.csv",
        "resolved-config-train.toml",
    ] {
        assert!(first.contains_key(name), "missing {name}");
    }
    pipeline(&out, &pairs, &entities, &[]);
    assert_eq!(snapshot(&out), first);
}

#[test]
fn separate_runs_agree_on_model_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, entities) = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a, &pairs, &entities, &[]);
    pipeline(&b, &pairs, &entities, &[]);
    for name in ["checkpoint.json", "metrics.csv", "attention_histogram.csv", "predictions.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn jsonl_format_switches_pair_prediction_and_attention_files() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, entities) = fixture(dir.path());
    let out = dir.path().join("out");
    pipeline(&out, &pairs, &entities, &["--format", "jsonl"]);
    for name in ["pairs.jsonl", "predictions.jsonl", "attention.jsonl"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
    assert!(!out.join("pairs.csv").exists());
    let report = fs::read_to_string(out.join("entity_report.csv")).unwrap();
    assert!(report.lines().count() > 1);
}

#[test]
fn ablate_writes_five_metric_files_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, entities) = fixture(dir.path());
    let out = dir.path().join("out");
    pipeline(&out, &pairs, &entities, &[]);
    ok(&out, &["ablate", "--max-epochs", "3"]);
    let mut metric_csvs: Vec<String> = snapshot(&out)
        .into_keys()
        .filter(|n| n.starts_with("metrics_") && n.ends_with(".csv"))
        .collect();
    metric_csvs.sort();
    assert_eq!(
        metric_csvs,
        ["metrics_full.csv", "metrics_no_child_embed.csv", "metrics_no_child_sent.csv", "metrics_no_parent_embed.csv", "metrics_no_parent_sent.csv"]
    );
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 12);
}

#[test]
fn entity_report_with_categories() {
    let dir = tempfile::tempdir().unwrap();
    let (pairs, entities) = fixture(dir.path());
    let out = dir.path().join("out");
    pipeline(&out, &pairs, &entities, &[]);
    let cats = dir.path().join("cats.csv");
    fs::write(&cats, "entity,category\nsolar,most-agree\ncoal,most-disagree\nGreta,most-neutral\n").unwrap();
    ok(&out, &["entity-report", "--categories", cats.to_str().unwrap(), "--sort", "disagreement", "--top-n", "2"]);
    let text = fs::read_to_string(out.join("category_attention.csv")).unwrap();
    assert!(text.starts_with("category,entities,mean_attention\n"));
    assert_eq!(text.lines().count(), 4);
    assert_eq!(fs::read_to_string(out.join("entity_report.csv")).unwrap().lines().count(), 3);

    fs::write(&cats, "entity,category\nnuclear,most-agree\n").unwrap();
    let o = run(&out, &["entity-report", "--categories", cats.to_str().unwrap()]);
    assert_eq!(error_json(&o)["error"], "UnknownEntity");
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["selfcheck", "--trials", "50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
    assert!(dir.path().join("selfcheck.json").is_file());
}

#[test]
fn missing_stage_input_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train"]);
    let err = error_json(&o);
    assert_eq!(err["error"], "StageInputMissing");
    assert!(err["message"].as_str().unwrap().contains("graph.jsonl"));
}

#[test]
fn config_problems_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[train]\npatience = 0\n").unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "selfcheck"]);
    assert_eq!(error_json(&o)["error"], "ConfigError");

    fs::write(&cfg, "[train]\nbogus = 1\n").unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "selfcheck"]);
    assert_eq!(error_json(&o)["error"], "ConfigError");

    let o = run(dir.path(), &["ingest", "--pairs", "nope.csv", "--entities", "nope.txt"]);
    assert_eq!(error_json(&o)["error"], "ConfigError");

    let o = Command::new(BIN)
        .args(["--out", dir.path().to_str().unwrap(), "selfcheck", "--trials", "1"])
        .env("DISAGREE_GAT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(error_json(&o)["error"], "ConfigError");
}

#[test]
fn config_file_values_reach_the_resolved_dump_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[train]\nseed = 9\nmax_epochs = 3\n[report]\nbins = 7\n").unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "11", "selfcheck", "--trials", "2"]);
    assert!(o.status.success());
    let dump = fs::read_to_string(dir.path().join("resolved-config-selfcheck.toml")).unwrap();
    assert!(dump.contains("seed = 11"), "{dump}");
    assert!(dump.contains("max_epochs = 3"));
    assert!(dump.contains("bins = 7"));
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train", "--epochs", "3"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--epochs"));
}

#[test]
fn every_subcommand_documents_its_flags() {
    let expect: [(&str, &[&str]); 9] = [
        ("ingest", &["--pairs", "--entities", "--no-filter"]),
        ("featurize", &["--embeddings", "--lexicon", "--mention-policy"]),
        ("build-graph", &["--dedup-nodes", "--group-split"]),
        ("train", &["--max-epochs", "--patience", "--batch", "--dropout", "--static-oversample", "--append-raw-sentiment"]),
        ("evaluate", &["--split"]),
        ("ablate", &["--max-epochs", "--batch"]),
        ("attention", &["--bins"]),
        ("entity-report", &["--top-n", "--sort", "--categories"]),
        ("selfcheck", &["--trials"]),
    ];
    for (cmd, flags) in expect {
        let o = Command::new(BIN).args([cmd, "--help"]).output().unwrap();
        assert!(o.status.success());
        let help = String::from_utf8_lossy(&o.stdout);
        for flag in flags.iter().chain(&["--config", "--seed", "--out", "--format"]) {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}
