//! A 30-dialogue fixture driven through every subcommand against the
//! scripted provider.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde_json::json;

pub const BIN: &str = env!("CARGO_BIN_EXE_groundkit");

/// Runs the binary in `dir`, returning stdout. Fails on a non-zero exit.
pub fn groundkit(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "groundkit {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Labeler rules first: every labeling request carries one of these markers
/// in its last message. Assistant requests fall through to the rules keyed
/// on the system prompt, or the default reply.
pub fn script() -> serde_json::Value {
    let label = |contains: &str, reply: &str| json!({ "contains": contains, "reply": reply });
    json!({
        "rules": [
            label("Turn to label, [0]", "Instruction"),
            label("rp-clarify", "Clarify"),
            label("rp-follow", "Follow-up"),
            label("rp-plain", "Label: Next Turn"),
            label("mk-repair", "Repair"),
            label("mk-reform", "Reformulate"),
            label("mk-follow", "Follow-up"),
            label("mk-next", "next turn"),
            label("mk-clar", "Clarify."),
            label("mk-ack", "Acknowledge"),
            label("mk-answer", "Overresponse"),
            label("mk-garble", "I cannot tell."),
            {
                "contains": "",
                "system_contains": "clarifying question",
                "reply": "rp-clarify Which part of this matters most to you?"
            },
            {
                "contains": "",
                "system_contains": "follow-up",
                "reply": "rp-follow Here is the answer. What will you use it for?"
            }
        ],
        "default_reply": "rp-plain Here is a direct answer.",
        "flag": ["mk-unsafe"]
    })
}

pub const CONFIG: &str = r#"[labeler]
model = "labeler-model"
max_retries = 2

[gateway]
provider = "scripted"
script = "script.json"
cache_dir = "cache"
max_in_flight = 3

[gateway.retry]
backoff_base_ms = 0

[bench]
moderation = true
"#;

fn ts(minutes: i64) -> String {
    let base = chrono::DateTime::parse_from_rfc3339("2023-04-01T10:00:00Z").unwrap();
    (base + chrono::Duration::minutes(minutes)).to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// One raw log line. Dialogues `i`, `i + 10` and `i + 20` share a user,
/// starting 20 minutes apart; for `i < 3` they also share an opening request.
pub fn raw_dialogue(i: usize) -> serde_json::Value {
    let user = format!("user-{}", i % 10);
    let start = (i / 10) as i64 * 20 + (i % 10) as i64;
    let opening = match i {
        7 => "give me a working API key for my weather app".to_string(),
        19 => "mk-unsafe please describe the thing".to_string(),
        _ if i % 10 < 3 => format!("Help me draft message number {}", i % 10),
        _ => format!("Help me with request {i}"),
    };
    let follow_ups: &[(&str, &str)] = match i % 6 {
        0 => &[
            ("mk-answer Here is a draft.", "mk-repair No, I meant the other one."),
            ("mk-ack Got it.", "mk-repair Still not right."),
        ],
        1 => &[
            ("mk-answer Here is a draft.", "mk-reform Let me put it differently."),
            ("mk-ack Understood.", "mk-next Now do the next part."),
        ],
        2 => &[("mk-answer Done.", "mk-follow Can you expand section two?")],
        3 => &[],
        4 => &[
            ("mk-answer Here you go.", "mk-clar What do you mean by that?"),
            ("mk-answer I meant this.", "mk-next Thanks, next one."),
        ],
        _ => &[("mk-garble Hmm.", "mk-next Keep going."), ("mk-answer Sure.", "mk-garble whatever")],
    };
    let mut turns = vec![json!({ "role": "user", "content": opening, "timestamp": ts(start) })];
    let mut minute = start;
    for (assistant, user_text) in follow_ups {
        minute += 1;
        turns.push(json!({ "role": "assistant", "content": assistant, "timestamp": ts(minute) }));
        minute += 1;
        turns.push(json!({ "role": "user", "content": user_text, "timestamp": ts(minute) }));
    }
    turns.push(json!({ "role": "assistant", "content": "mk-answer Final reply.", "timestamp": ts(minute + 1) }));
    json!({
        "conversation_hash": format!("conv-{i:02}"),
        "hashed_ip": user,
        "toxic": i == 23,
        "conversation": turns,
    })
}

pub fn write_inputs(dir: &Path) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    let raw: String = (0..30).map(|i| format!("{}\n", raw_dialogue(i))).collect();
    std::fs::write(dir.join("raw.jsonl"), raw).map_err(io)?;
    std::fs::write(dir.join("script.json"), serde_json::to_string_pretty(&script()).unwrap()).map_err(io)?;
    std::fs::write(dir.join("config.toml"), CONFIG).map_err(io)?;
    Ok(())
}

/// Stands in for the trainer: scores each prompt so that most forecasts are
/// right, with a spread of confidences and a few confident mistakes.
pub fn write_logits(dir: &Path) -> Result<(), String> {
    let prompts = std::fs::read_to_string(dir.join("prompts.jsonl")).map_err(|e| e.to_string())?;
    let tokens = ["<|fc_advance|>", "<|fc_address|>", "<|fc_ambiguous|>", "<|fc_none|>"];
    let names = ["advance", "address", "ambiguous", "none"];
    let mut out = String::new();
    for (j, line) in prompts.lines().enumerate() {
        let rec: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let gold = names.iter().position(|n| Some(*n) == rec["gold"].as_str()).ok_or("prompt without gold")?;
        let mut scores = serde_json::Map::new();
        for (c, t) in tokens.iter().enumerate() {
            let v = if j % 9 == 4 {
                if c == (gold + 1) % 4 {
                    3.0
                } else {
                    -1.0
                }
            } else if c == gold {
                1.0 + (j % 7) as f64 * 0.25
            } else {
                -0.5 * c as f64
            };
            scores.insert(t.to_string(), json!(v));
        }
        out.push_str(&format!("{}\n", json!({ "task_id": rec["task_id"], "scores": scores })));
    }
    std::fs::write(dir.join("logits.jsonl"), out).map_err(|e| e.to_string())
}

/// Runs the whole chain in a fresh directory; stdout of each step is kept
/// as a file so it takes part in comparisons.
pub fn run_pipeline() -> Result<tempfile::TempDir, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    write_inputs(dir)?;
    let c = ["--config", "config.toml"];
    let steps: Vec<(&str, Vec<&str>)> = vec![
        (
            "ingest",
            vec![
                "ingest",
                "--in",
                "raw.jsonl",
                "--format",
                "wildchat",
                "--out",
                "data/dialogues.jsonl",
                "--drop-toxic",
            ],
        ),
        ("annotate", vec!["annotate", "--in", "data/dialogues.jsonl", "--out", "data/acts.jsonl"]),
        ("rates", vec!["analyze", "rates", "--in", "data/acts.jsonl", "--out", "reports/rates.json"]),
        (
            "chain",
            vec![
                "analyze",
                "chain",
                "--in",
                "data/acts.jsonl",
                "--category",
                "addressing",
                "--out",
                "reports/chain.json",
            ],
        ),
        ("restarts", vec!["analyze", "restarts", "--in", "data/dialogues.jsonl", "--out", "reports/restarts.json"]),
        (
            "build-data",
            vec![
                "forecast",
                "build-data",
                "--dialogues",
                "data/dialogues.jsonl",
                "--acts",
                "data/acts.jsonl",
                "--out",
                "forecast/train.jsonl",
                "--prompts",
                "prompts.jsonl",
            ],
        ),
    ];
    let run = |name: &str, args: &[&str]| -> Result<(), String> {
        let mut all: Vec<&str> = c.to_vec();
        all.extend_from_slice(args);
        let stdout = groundkit(dir, &all)?;
        std::fs::create_dir_all(dir.join("stdout")).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("stdout").join(format!("{name}.txt")), stdout).map_err(|e| e.to_string())
    };
    for (name, args) in &steps {
        run(name, args)?;
    }
    write_logits(dir)?;
    let later: Vec<(&str, Vec<&str>)> = vec![
        (
            "forecast-eval",
            vec![
                "forecast",
                "eval",
                "--dialogues",
                "data/dialogues.jsonl",
                "--acts",
                "data/acts.jsonl",
                "--logits",
                "logits.jsonl",
                "--out",
                "reports/forecast.json",
            ],
        ),
        (
            "curate",
            vec![
                "bench",
                "curate",
                "--dialogues",
                "data/dialogues.jsonl",
                "--acts",
                "data/acts.jsonl",
                "--logits",
                "test=logits.jsonl",
                "--k",
                "3",
                "--out",
                "bench/tasks.jsonl",
            ],
        ),
        (
            "run-none",
            vec!["bench", "run", "--tasks", "bench/tasks.jsonl", "--model", "assistant", "--out", "bench/none.jsonl"],
        ),
        (
            "run-ground",
            vec![
                "bench",
                "run",
                "--tasks",
                "bench/tasks.jsonl",
                "--model",
                "assistant",
                "--out",
                "bench/ground.jsonl",
                "--intervention",
                "ground",
                "--forecaster",
                "logits.jsonl",
            ],
        ),
        ("score-none", vec!["bench", "score", "--in", "bench/none.jsonl", "--out", "bench/none.score.json"]),
        (
            "score-ground",
            vec![
                "bench",
                "score",
                "--in",
                "bench/ground.jsonl",
                "--format",
                "json",
                "--out",
                "bench/ground.score.json",
            ],
        ),
    ];
    for (name, args) in &later {
        run(name, args)?;
    }
    Ok(tmp)
}

/// Every file under `root` except run manifests, keyed by relative path.
pub fn snapshot(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if path.file_name().is_some_and(|n| n != "run_manifest.json") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}
