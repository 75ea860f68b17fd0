//! File-format round trips, including the two files exchanged with the
//! forecaster trainer.

use std::collections::BTreeMap;

use proptest::prelude::*;

use groundkit::core::dialogue::{AnnotatedTurn, Annotation, FailureReason, LabelFailure, LabeledDialogue};
use groundkit::core::forecast::{build_training_sequences, ForecastBackend, ForecastLabel};
use groundkit::core::{Dialogue, GroundingAct, Source, Speaker, Timestamp};
use groundkit::formats::annotations::{read_annotations, write_annotations};
use groundkit::formats::dialogues::{read_dialogues, write_dialogues};
use groundkit::formats::forecast::{read_sequences, write_sequences, LogitsTable};

fn dialogue() -> impl Strategy<Value = Dialogue> {
    (
        "[a-z0-9-]{1,10}",
        prop::option::of("[a-z]{1,6}"),
        prop::sample::select(vec![Source::WildChat, Source::MultiWoz, Source::Generic]),
        prop::collection::vec(("\\PC{0,20}[a-z]\\PC{0,10}", prop::option::of(0i64..100_000)), 1..6),
        any::<bool>(),
    )
        .prop_map(|(id, user, source, turns, toxic)| {
            // Timestamps are stored as gaps and summed so they never decrease.
            let mut clock = 1_680_000_000i64;
            let mut d = Dialogue::from_turns(
                id,
                user,
                source,
                turns.into_iter().enumerate().map(|(i, (text, gap))| {
                    let speaker = if i % 2 == 0 { Speaker::User } else { Speaker::Assistant };
                    let ts = gap.map(|g| {
                        clock += g;
                        Timestamp(clock)
                    });
                    (speaker, text, ts)
                }),
            );
            d.toxic = toxic;
            d
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dialogues_survive_a_round_trip(ds in prop::collection::vec(dialogue(), 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dialogues(&path, &ds).unwrap();
        prop_assert_eq!(read_dialogues(&path).unwrap(), ds);
    }
}

#[test]
fn annotations_survive_a_round_trip() {
    let anns = vec![
        Annotation::Labeled(AnnotatedTurn {
            dialogue_id: "d".into(),
            turn: 0,
            speaker: Speaker::User,
            act: GroundingAct::Instruction,
            annotator_id: "m:t".into(),
            raw_label_text: "Instruction".into(),
        }),
        Annotation::Failed(LabelFailure {
            dialogue_id: "d".into(),
            turn: 1,
            speaker: Speaker::Assistant,
            annotator_id: "m:t".into(),
            raw_label_text: "??".into(),
            reason: FailureReason::Unparsable { attempts: 3 },
        }),
        Annotation::Failed(LabelFailure {
            dialogue_id: "d".into(),
            turn: 2,
            speaker: Speaker::User,
            annotator_id: "m:t".into(),
            raw_label_text: String::new(),
            reason: FailureReason::Backend("HTTP 500".into()),
        }),
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    write_annotations(&path, &anns).unwrap();
    assert_eq!(read_annotations(&path).unwrap(), anns);
}

#[test]
fn training_file_round_trips_with_token_positions_weighted() {
    use GroundingAct as A;
    let d = Dialogue::from_turns(
        "d1",
        None,
        Source::Generic,
        ["write a haiku", "Leaves fall", "no, about spring", "Buds open", "thanks"]
            .iter()
            .enumerate()
            .map(|(i, t)| (if i % 2 == 0 { Speaker::User } else { Speaker::Assistant }, t.to_string(), None)),
    );
    let acts = [A::Instruction, A::Overresponse, A::Repair, A::NextTurn, A::Acknowledge];
    let labeled = LabeledDialogue::new(
        "d1",
        acts.iter().enumerate().map(|(i, &a)| (if i % 2 == 0 { Speaker::User } else { Speaker::Assistant }, Some(a))),
    );
    let built = build_training_sequences(&[d], &[labeled], 2.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_sequences(&path, &built.sequences).unwrap();
    let back = read_sequences(&path).unwrap();
    assert_eq!(back, built.sequences);

    let line: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
    let kinds: Vec<&str> = line["parts"].as_array().unwrap().iter().map(|p| p["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["user", "token", "assistant", "user", "token", "assistant", "user", "token"]);
    let tokens: Vec<&str> = line["parts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["kind"] == "token")
        .map(|p| p["text"].as_str().unwrap())
        .collect();
    assert_eq!(tokens, ["<|fc_address|>", "<|fc_advance|>", "<|fc_none|>"]);
    assert_eq!(back[0].weight_span(), vec![1, 4, 7]);
}

#[test]
fn training_file_rejects_malformed_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let stray = r#"{"task_id":"x","lambda":2.0,"parts":[{"kind":"token","text":"<|fc_none|>"}]}"#;
    std::fs::write(&path, format!("{stray}\n")).unwrap();
    assert!(read_sequences(&path).is_err());
    let unknown =
        r#"{"task_id":"x","lambda":2.0,"parts":[{"kind":"user","text":"hi"},{"kind":"token","text":"<|fc_maybe|>"}]}"#;
    std::fs::write(&path, format!("{unknown}\n")).unwrap();
    assert!(read_sequences(&path).is_err());
}

#[test]
fn logits_file_accepts_token_or_label_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("logits.jsonl");
    // Whitespace as a Python writer would emit it.
    std::fs::write(
        &path,
        concat!(
            "{\"task_id\": \"a\", \"scores\": {\"<|fc_advance|>\": 1.5, \"<|fc_address|>\": -0.25, \"<|fc_ambiguous|>\": 0.0, \"<|fc_none|>\": 0.75}}\n",
            "{\"task_id\": \"b\", \"scores\": {\"advance\": 0, \"address\": 2, \"ambiguous\": 1, \"none\": -1}}\n",
        ),
    )
    .unwrap();
    let table = LogitsTable::read(&path).unwrap();
    let a = table.scores("a", "ignored").unwrap();
    assert_eq!(a[&ForecastLabel::Advance], 1.5);
    assert_eq!(a[&ForecastLabel::None], 0.75);
    let b: BTreeMap<ForecastLabel, f64> = table.scores("b", "").unwrap();
    assert_eq!(b[&ForecastLabel::Address], 2.0);
    assert!(table.scores("missing", "").is_err());
}

#[test]
fn logits_file_rejects_duplicates_and_missing_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("logits.jsonl");
    let full = r#"{"task_id":"a","scores":{"advance":0,"address":0,"ambiguous":0,"none":0}}"#;
    std::fs::write(&path, format!("{full}\n{full}\n")).unwrap();
    assert!(LogitsTable::read(&path).is_err());
    std::fs::write(&path, "{\"task_id\":\"a\",\"scores\":{\"advance\":0,\"bogus\":1}}\n").unwrap();
    assert!(LogitsTable::read(&path).is_err());
}
