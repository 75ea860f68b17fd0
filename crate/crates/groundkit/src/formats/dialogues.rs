//! Dialogue log readers and the canonical dialogue record.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use groundkit_core::dialogue::{validate_dialogue, Dialogue, Source, Speaker, Timestamp, Turn};

use super::{read_lines_with, LineError, Parsed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LogFormat {
    Canonical,
    Wildchat,
    Multiwoz,
}

impl std::str::FromStr for LogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <LogFormat as clap::ValueEnum>::from_str(s, true).map_err(|_| format!("unknown log format {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub role: String,
    pub text: String,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub dialogue_id: String,
    #[serde(default)]
    pub user_id: Option<String>,
    pub source: String,
    pub turns: Vec<TurnRecord>,
    /// Upstream moderation flag; omitted when false.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub toxic: bool,
}

pub fn format_timestamp(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t.0, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.0.to_string())
}

/// RFC 3339, or `YYYY-MM-DD HH:MM:SS` with an optional offset (naive times
/// are taken as UTC). Sub-second precision is dropped.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    let s = s.trim();
    if let Ok(d) = DateTime::parse_from_rfc3339(s) {
        return Ok(Timestamp(d.timestamp()));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%d %H:%M:%S%.f%#z"] {
        if let Ok(d) = DateTime::parse_from_str(s, fmt) {
            return Ok(Timestamp(d.timestamp()));
        }
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(d) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Timestamp(d.and_utc().timestamp()));
        }
    }
    Err(format!("unrecognized timestamp {s:?}"))
}

impl DialogueRecord {
    pub fn from_dialogue(d: &Dialogue) -> Self {
        DialogueRecord {
            dialogue_id: d.dialogue_id.clone(),
            user_id: d.user_id.clone(),
            source: d.source.as_str().to_string(),
            turns: d
                .turns
                .iter()
                .map(|t| TurnRecord {
                    index: t.index,
                    role: t.speaker.as_str().to_string(),
                    text: t.text.clone(),
                    timestamp: t.timestamp.map(format_timestamp),
                })
                .collect(),
            toxic: d.toxic,
        }
    }

    /// Converts without validating; see [`checked`].
    pub fn to_dialogue(&self) -> Result<Dialogue, String> {
        let source = self.source.parse::<Source>().map_err(|e| e.to_string())?;
        let mut turns = Vec::with_capacity(self.turns.len());
        for t in &self.turns {
            turns.push(Turn {
                index: t.index,
                speaker: t.role.parse::<Speaker>().map_err(|e| e.to_string())?,
                text: t.text.clone(),
                timestamp: t.timestamp.as_deref().map(parse_timestamp).transpose()?,
            });
        }
        Ok(Dialogue {
            dialogue_id: self.dialogue_id.clone(),
            user_id: self.user_id.clone(),
            source,
            turns,
            toxic: self.toxic,
        })
    }
}

/// Rejects dialogues with validation errors; warnings pass.
pub fn checked(d: Dialogue) -> Result<Dialogue, String> {
    let report = validate_dialogue(&d);
    if report.is_valid() {
        Ok(d)
    } else {
        let issues: Vec<String> = report.errors().map(ToString::to_string).collect();
        Err(format!("dialogue {} is invalid: {}", d.dialogue_id, issues.join(", ")))
    }
}

#[derive(Debug, Deserialize)]
struct WildChatTurn {
    role: String,
    content: String,
    #[serde(default)]
    timestamp: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WildChatRecord {
    #[serde(alias = "conversation_id")]
    conversation_hash: String,
    #[serde(default, alias = "hashed_ip")]
    user_id: Option<String>,
    #[serde(default)]
    toxic: Option<bool>,
    #[serde(default)]
    timestamp: Option<String>,
    conversation: Vec<WildChatTurn>,
}

fn wildchat_dialogue(line: &str) -> Result<Dialogue, String> {
    let r: WildChatRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut turns = Vec::with_capacity(r.conversation.len());
    for (index, t) in r.conversation.into_iter().enumerate() {
        let speaker = match t.role.to_ascii_lowercase().as_str() {
            "user" | "human" => Speaker::User,
            "assistant" | "gpt" | "bot" => Speaker::Assistant,
            other => return Err(format!("turn {index}: unknown role {other:?}")),
        };
        let timestamp = t.timestamp.as_deref().map(parse_timestamp).transpose()?;
        turns.push(Turn { index, speaker, text: t.content, timestamp });
    }
    // The record-level time stands in for a missing first-turn time.
    if let (Some(first), Some(ts)) = (turns.first_mut(), r.timestamp.as_deref()) {
        if first.timestamp.is_none() {
            first.timestamp = Some(parse_timestamp(ts)?);
        }
    }
    Ok(Dialogue {
        dialogue_id: r.conversation_hash,
        user_id: r.user_id,
        source: Source::WildChat,
        turns,
        toxic: r.toxic.unwrap_or(false),
    })
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MultiWozUtterance {
    Plain(String),
    Annotated { text: String },
}

#[derive(Debug, Deserialize)]
struct MultiWozRecord {
    #[serde(default)]
    dialogue_id: Option<String>,
    log: Vec<MultiWozUtterance>,
}

fn multiwoz_dialogue(id: Option<String>, r: MultiWozRecord) -> Result<Dialogue, String> {
    let dialogue_id = r.dialogue_id.or(id).ok_or("missing dialogue_id")?;
    let turns = r.log.into_iter().enumerate().map(|(i, u)| {
        let text = match u {
            MultiWozUtterance::Plain(t) | MultiWozUtterance::Annotated { text: t } => t,
        };
        let speaker = if i % 2 == 0 { Speaker::User } else { Speaker::Assistant };
        (speaker, text, None)
    });
    Ok(Dialogue::from_turns(dialogue_id, None, Source::MultiWoz, turns))
}

fn canonical_dialogue(line: &str) -> Result<Dialogue, String> {
    serde_json::from_str::<DialogueRecord>(line).map_err(|e| e.to_string())?.to_dialogue()
}

/// Dialogues and per-record errors from one input file.
pub type ParsedLog = Parsed<Dialogue>;

/// Reads a log in the given format. Unparsable or invalid records go to
/// `errors` with their line number; MultiWOZ files may also be a single JSON
/// object keyed by dialogue id, in which case errors carry line 0.
pub fn parse_log(path: &Path, format: LogFormat) -> anyhow::Result<ParsedLog> {
    let open = || fs::File::open(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()));
    let reader = BufReader::new(open()?);
    match format {
        LogFormat::Canonical => Ok(read_lines_with(reader, |l| canonical_dialogue(l).and_then(checked))?),
        LogFormat::Wildchat => Ok(read_lines_with(reader, |l| wildchat_dialogue(l).and_then(checked))?),
        LogFormat::Multiwoz => {
            let text = fs::read_to_string(path)?;
            if let Ok(map) = serde_json::from_str::<BTreeMap<String, serde_json::Value>>(&text) {
                if !map.is_empty() && map.values().all(|v| v.get("log").is_some()) {
                    return Ok(multiwoz_document(map));
                }
            }
            Ok(read_lines_with(text.as_bytes(), |l| {
                let r: MultiWozRecord = serde_json::from_str(l).map_err(|e| e.to_string())?;
                multiwoz_dialogue(None, r).and_then(checked)
            })?)
        }
    }
}

fn multiwoz_document(map: BTreeMap<String, serde_json::Value>) -> ParsedLog {
    let mut out = ParsedLog::default();
    for (key, value) in map {
        let id = key.trim_end_matches(".json").to_string();
        let parsed = serde_json::from_value::<MultiWozRecord>(value)
            .map_err(|e| e.to_string())
            .and_then(|r| multiwoz_dialogue(Some(id.clone()), r))
            .and_then(checked);
        match parsed {
            Ok(d) => out.records.push(d),
            Err(e) => out.errors.push(LineError { line: 0, error: format!("{id}: {e}") }),
        }
    }
    out
}

/// Reads canonical dialogues, failing on any bad record.
pub fn read_dialogues(path: &Path) -> anyhow::Result<Vec<Dialogue>> {
    parse_log(path, LogFormat::Canonical)?.strict(path)
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) -> anyhow::Result<()> {
    let records: Vec<DialogueRecord> = dialogues.iter().map(DialogueRecord::from_dialogue).collect();
    super::write_jsonl(path, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps() {
        assert_eq!(parse_timestamp("1970-01-01T00:01:00Z").unwrap(), Timestamp(60));
        assert_eq!(parse_timestamp("1970-01-01 00:01:00+00:00").unwrap(), Timestamp(60));
        assert_eq!(parse_timestamp("1970-01-01 01:01:00+01:00").unwrap(), Timestamp(60));
        assert_eq!(parse_timestamp("1970-01-01 00:01:00").unwrap(), Timestamp(60));
        assert_eq!(format_timestamp(Timestamp(60)), "1970-01-01T00:01:00Z");
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn wildchat_record() {
        let line = r#"{"conversation_hash":"h","hashed_ip":"u","toxic":true,"timestamp":"2023-04-09 00:02:53+00:00",
            "conversation":[{"role":"user","content":"hi"},{"role":"assistant","content":"hello"}]}"#
            .replace('\n', "");
        let d = wildchat_dialogue(&line).unwrap();
        assert_eq!(d.dialogue_id, "h");
        assert_eq!(d.user_id.as_deref(), Some("u"));
        assert!(d.toxic);
        assert_eq!(d.turns[1].speaker, Speaker::Assistant);
        assert!(d.start_time().is_some());
    }

    #[test]
    fn multiwoz_record() {
        let line = r#"{"dialogue_id":"SNG1","log":[{"text":"need a taxi","metadata":{}},{"text":"where to?","metadata":{"taxi":{}}}]}"#;
        let r: MultiWozRecord = serde_json::from_str(line).unwrap();
        let d = multiwoz_dialogue(None, r).unwrap();
        assert_eq!(d.turns.len(), 2);
        assert_eq!(d.source, Source::MultiWoz);
        assert_eq!(d.turns[0].speaker, Speaker::User);
    }
}
