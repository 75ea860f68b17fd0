//! Forecaster training data, prompt lists and logits.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use groundkit_core::forecast::{ConditionedSequence, ForecastBackend, ForecastItem, ForecastLabel, Segment};

use super::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartRecord {
    pub kind: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub task_id: String,
    pub parts: Vec<PartRecord>,
    pub lambda: f64,
}

impl SequenceRecord {
    pub fn from_sequence(s: &ConditionedSequence) -> Self {
        SequenceRecord {
            task_id: s.task_id.clone(),
            parts: s.parts.iter().map(|p| PartRecord { kind: p.kind.as_str().into(), text: p.text.clone() }).collect(),
            lambda: s.lambda,
        }
    }

    pub fn to_sequence(&self) -> Result<ConditionedSequence, String> {
        let mut parts = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            parts.push(Segment {
                kind: p.kind.parse().map_err(|e: groundkit_core::dialogue::UnknownName| e.to_string())?,
                text: p.text.clone(),
            });
        }
        let seq = ConditionedSequence { task_id: self.task_id.clone(), parts, lambda: self.lambda };
        seq.validate().map_err(|e| e.to_string())?;
        Ok(seq)
    }
}

pub fn write_sequences(path: &Path, seqs: &[ConditionedSequence]) -> anyhow::Result<()> {
    let records: Vec<SequenceRecord> = seqs.iter().map(SequenceRecord::from_sequence).collect();
    write_jsonl(path, &records)
}

pub fn read_sequences(path: &Path) -> anyhow::Result<Vec<ConditionedSequence>> {
    let records: Vec<SequenceRecord> = read_jsonl(path)?.strict(path)?;
    records
        .iter()
        .map(|r| r.to_sequence().map_err(|e| anyhow::anyhow!("{}: {}: {e}", path.display(), r.task_id)))
        .collect()
}

/// A prompt to score, with its gold label when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub task_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl PromptRecord {
    pub fn from_item(item: &ForecastItem) -> Self {
        PromptRecord {
            task_id: item.task_id.clone(),
            prompt: item.prompt.clone(),
            gold: Some(item.gold.as_str().into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRecord {
    pub task_id: String,
    pub scores: BTreeMap<String, f64>,
}

/// Per-task forecast-token scores loaded from a logits file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogitsTable {
    pub scores: BTreeMap<String, BTreeMap<ForecastLabel, f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no logits for task {0}")]
pub struct MissingLogits(pub String);

impl LogitsTable {
    pub fn from_records(records: &[LogitsRecord]) -> Result<Self, String> {
        let mut table = LogitsTable::default();
        for r in records {
            let mut scores = BTreeMap::new();
            for (name, &v) in &r.scores {
                let label: ForecastLabel =
                    name.parse().map_err(|_| format!("{}: unknown label {name:?}", r.task_id))?;
                if scores.insert(label, v).is_some() {
                    return Err(format!("{}: label {label} given twice", r.task_id));
                }
            }
            if table.scores.insert(r.task_id.clone(), scores).is_some() {
                return Err(format!("task {} appears twice", r.task_id));
            }
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let records: Vec<LogitsRecord> = read_jsonl(path)?.strict(path)?;
        LogitsTable::from_records(&records).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_records(&self) -> Vec<LogitsRecord> {
        self.scores
            .iter()
            .map(|(id, s)| LogitsRecord {
                task_id: id.clone(),
                scores: s.iter().map(|(l, v)| (l.as_str().to_string(), *v)).collect(),
            })
            .collect()
    }
}

impl ForecastBackend for LogitsTable {
    type Error = MissingLogits;

    fn scores(&self, task_id: &str, _instruction: &str) -> Result<BTreeMap<ForecastLabel, f64>, MissingLogits> {
        self.scores.get(task_id).cloned().ok_or_else(|| MissingLogits(task_id.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use groundkit_core::forecast::{forecast, ForecastError, SegmentKind};

    #[test]
    fn sequence_round_trip() {
        let s = ConditionedSequence {
            task_id: "t".into(),
            parts: vec![
                Segment { kind: SegmentKind::User, text: "m0".into() },
                Segment { kind: SegmentKind::Token, text: ForecastLabel::Address.token().into() },
                Segment { kind: SegmentKind::Assistant, text: "r0".into() },
            ],
            lambda: 2.0,
        };
        let json = serde_json::to_string(&SequenceRecord::from_sequence(&s)).unwrap();
        assert_eq!(
            json,
            r#"{"task_id":"t","parts":[{"kind":"user","text":"m0"},{"kind":"token","text":"<|fc_address|>"},{"kind":"assistant","text":"r0"}],"lambda":2.0}"#
        );
        let back: SequenceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_sequence().unwrap(), s);
    }

    #[test]
    fn logits_table() {
        let r: LogitsRecord =
            serde_json::from_str(r#"{"task_id":"t","scores":{"advance":0.1,"address":2.0,"ambiguous":-1,"none":0}}"#)
                .unwrap();
        let table = LogitsTable::from_records(std::slice::from_ref(&r)).unwrap();
        let d = forecast("t", "", &table).unwrap();
        assert_eq!(d.argmax(), ForecastLabel::Address);
        assert_eq!(forecast("u", "", &table), Err(ForecastError::Backend(MissingLogits("u".into()))));
        assert!(LogitsTable::from_records(&[r.clone(), r]).is_err());
    }
}
