//! Exit codes and report contents of the command-line tool.

mod pipeline;

use std::path::Path;
use std::process::{Command, Output};

use groundkit::core::analysis::{conditional_chain, ChainOptions};
use groundkit::core::dialogue::LabeledDialogue;
use groundkit::core::GroundingCategory;
use groundkit::formats::annotations::read_annotations;
use pipeline::{groundkit, run_pipeline, BIN};

fn raw(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    raw(dir, args).status.code().unwrap()
}

fn jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["--help"]), 0);
    assert_eq!(code(dir.path(), &["--version"]), 0);
    assert_eq!(code(dir.path(), &["bench", "score", "--help"]), 0);
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["bench", "score"]), 1);
    assert_eq!(code(d, &["bench", "score", "--in", "missing.jsonl"]), 1);
    assert_eq!(code(d, &["--jobs", "0", "bench", "score", "--in", "x"]), 1);

    std::fs::write(
        d.join("bad.jsonl"),
        "{\"task_id\":\"t\",\"gold\":\"advance\",\"response_act\":\"clarify\",\"correct\":1}\n",
    )
    .unwrap();
    let out = raw(d, &["bench", "score", "--in", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("correct"));

    std::fs::write(d.join("empty.toml"), "[intervention]\nclarify_first = \"  \"\n").unwrap();
    assert_eq!(code(d, &["intervene-config-check", "--in", "empty.toml"]), 1);
    std::fs::write(d.join("typo.toml"), "[labeler]\nmodle = \"x\"\n").unwrap();
    assert_eq!(code(d, &["--config", "typo.toml", "intervene-config-check"]), 1);
}

#[test]
fn offline_cold_cache_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline::write_inputs(d).unwrap();
    groundkit(d, &["ingest", "--in", "raw.jsonl", "--format", "wildchat", "--out", "dialogues.jsonl"]).unwrap();
    let out =
        raw(d, &["--offline", "--config", "config.toml", "annotate", "--in", "dialogues.jsonl", "--out", "acts.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offline-cache-miss"));

    // Once warmed, the same command succeeds offline and reproduces the file.
    groundkit(d, &["--config", "config.toml", "annotate", "--in", "dialogues.jsonl", "--out", "online.jsonl"]).unwrap();
    groundkit(
        d,
        &["--offline", "--config", "config.toml", "annotate", "--in", "dialogues.jsonl", "--out", "offline.jsonl"],
    )
    .unwrap();
    assert_eq!(std::fs::read(d.join("online.jsonl")).unwrap(), std::fs::read(d.join("offline.jsonl")).unwrap());
}

#[test]
fn unreachable_endpoint_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline::write_inputs(d).unwrap();
    groundkit(d, &["ingest", "--in", "raw.jsonl", "--format", "wildchat", "--out", "dialogues.jsonl", "--max", "1"])
        .unwrap();
    std::fs::write(
        d.join("net.toml"),
        "[gateway]\nendpoint = \"http://127.0.0.1:9/v1\"\napi_key_env = \"GROUNDKIT_TEST_UNSET_KEY\"\ntimeout_secs = 2\n[gateway.retry]\nmax_attempts = 1\n",
    )
    .unwrap();
    let out = Command::new(BIN)
        .args(["--config", "net.toml", "annotate", "--in", "dialogues.jsonl", "--out", "acts.jsonl"])
        .current_dir(d)
        .env_remove("GROUNDKIT_TEST_UNSET_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn intervene_check_prints_the_routing_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = groundkit(dir.path(), &["intervene-config-check"]).unwrap();
    let rows: Vec<(&str, &str)> = out
        .lines()
        .map(|l| {
            let mut w = l.split_whitespace();
            let label = w.next().unwrap();
            w.next();
            (label, w.next().unwrap())
        })
        .collect();
    assert_eq!(
        rows,
        [
            ("advance", "answer_then_follow_up"),
            ("address", "clarify_first"),
            ("ambiguous", "clarify_first"),
            ("none", "passthrough")
        ]
    );
}

#[test]
fn pipeline_outputs_are_consistent() {
    let tmp = run_pipeline().unwrap();
    let d = tmp.path();

    // The toxic dialogue is dropped at ingest.
    let dialogues = jsonl(&d.join("data/dialogues.jsonl"));
    assert_eq!(dialogues.len(), 29);
    assert!(std::fs::read_to_string(d.join("data/dialogues.jsonl.errors.jsonl")).unwrap().is_empty());

    // Garbled turns are recorded as failures, not silently dropped.
    let acts = jsonl(&d.join("data/acts.jsonl"));
    let turns: usize = dialogues.iter().map(|x| x["turns"].as_array().unwrap().len()).sum();
    assert_eq!(acts.len(), turns);
    assert!(acts.iter().any(|a| a["act"].is_null() && a["failure"]["kind"] == "unparsable"));

    // The chain report equals a direct computation over the written annotations.
    let annotations = read_annotations(&d.join("data/acts.jsonl")).unwrap();
    let labeled = LabeledDialogue::group(&annotations);
    let est = conditional_chain(&labeled, GroundingCategory::Addressing, 4, &ChainOptions::default()).unwrap();
    let chain: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("reports/chain.json")).unwrap()).unwrap();
    let probs: Vec<f64> = chain["probs"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(probs, est.probs);

    // Users 0-2 reopen the same request every 20 minutes across three sessions.
    let restarts: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("reports/restarts.json")).unwrap()).unwrap();
    assert_eq!(restarts["restarts"], 6, "{restarts}");
    assert_eq!(restarts["eligible"], 19);

    // Curation: at most k per label, confident mistakes excluded, unsafe prompts dropped.
    let tasks = jsonl(&d.join("bench/tasks.jsonl"));
    assert!(!tasks.is_empty());
    for label in ["advance", "address", "ambiguous", "none"] {
        assert!(tasks.iter().filter(|t| t["gold"] == label).count() <= 3);
    }
    assert!(tasks.iter().all(|t| !t["prompt"].as_str().unwrap().contains("mk-unsafe")));
    assert!(tasks.iter().all(|t| !t["prompt"].as_str().unwrap().contains("API key")));

    // Routing the prompt makes every scripted response correct.
    let none: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("bench/none.score.json")).unwrap()).unwrap();
    let ground: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("bench/ground.score.json")).unwrap()).unwrap();
    assert_eq!(ground["overall"]["accuracy"], 1.0, "{ground}");
    assert!(none["overall"]["accuracy"].as_f64().unwrap() < 1.0);
    assert_eq!(none["overall"]["n"], tasks.len());

    // Training file and logits file both follow the documented schema.
    let train = jsonl(&d.join("forecast/train.jsonl"));
    assert!(train.iter().all(|s| s["lambda"] == 2.0 && s["parts"][1]["kind"] == "token"));

    // Each output directory carries a manifest naming its subcommands.
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("bench/run_manifest.json")).unwrap()).unwrap();
    for sub in ["bench curate", "bench run", "bench score"] {
        assert!(manifest["runs"].get(sub).is_some(), "{sub} missing from {manifest}");
    }
}
