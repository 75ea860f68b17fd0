//! Turn-level annotation records.
//!
//! Labeled turns carry `act`; labeling failures carry `act: null` and a
//! `failure` object so they stay visible but drop out of statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use groundkit_core::dialogue::{AnnotatedTurn, Annotation, FailureReason, GroundingAct, LabelFailure, Speaker};

use super::{read_jsonl, Parsed};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureRecord {
    Unparsable { attempts: usize },
    Backend { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub dialogue_id: String,
    pub turn: usize,
    pub act: Option<String>,
    pub annotator_id: String,
    pub raw: String,
    /// Speaker of the turn. Older files without it fall back to alternation
    /// starting with the user.
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
}

impl AnnotationRecord {
    pub fn from_annotation(a: &Annotation) -> Self {
        match a {
            Annotation::Labeled(t) => AnnotationRecord {
                dialogue_id: t.dialogue_id.clone(),
                turn: t.turn,
                act: Some(t.act.as_str().to_string()),
                annotator_id: t.annotator_id.clone(),
                raw: t.raw_label_text.clone(),
                role: Some(t.speaker.as_str().to_string()),
                failure: None,
            },
            Annotation::Failed(f) => AnnotationRecord {
                dialogue_id: f.dialogue_id.clone(),
                turn: f.turn,
                act: None,
                annotator_id: f.annotator_id.clone(),
                raw: f.raw_label_text.clone(),
                role: Some(f.speaker.as_str().to_string()),
                failure: Some(match &f.reason {
                    FailureReason::Unparsable { attempts } => FailureRecord::Unparsable { attempts: *attempts },
                    FailureReason::Backend(message) => FailureRecord::Backend { message: message.clone() },
                }),
            },
        }
    }

    pub fn to_annotation(&self) -> Result<Annotation, String> {
        let speaker = match &self.role {
            Some(r) => r.parse::<Speaker>().map_err(|e| e.to_string())?,
            None if self.turn.is_multiple_of(2) => Speaker::User,
            None => Speaker::Assistant,
        };
        match &self.act {
            Some(name) => {
                let act = name.parse::<GroundingAct>().map_err(|e| e.to_string())?;
                if !act.allowed_at(self.turn) {
                    return Err(format!("{act} is only valid on turn 0, found on turn {}", self.turn));
                }
                Ok(Annotation::Labeled(AnnotatedTurn {
                    dialogue_id: self.dialogue_id.clone(),
                    turn: self.turn,
                    speaker,
                    act,
                    annotator_id: self.annotator_id.clone(),
                    raw_label_text: self.raw.clone(),
                }))
            }
            None => Ok(Annotation::Failed(LabelFailure {
                dialogue_id: self.dialogue_id.clone(),
                turn: self.turn,
                speaker,
                annotator_id: self.annotator_id.clone(),
                raw_label_text: self.raw.clone(),
                reason: match &self.failure {
                    Some(FailureRecord::Backend { message }) => FailureReason::Backend(message.clone()),
                    Some(FailureRecord::Unparsable { attempts }) => FailureReason::Unparsable { attempts: *attempts },
                    None => FailureReason::Unparsable { attempts: 0 },
                },
            })),
        }
    }
}

pub fn read_annotations(path: &Path) -> anyhow::Result<Vec<Annotation>> {
    let parsed: Parsed<AnnotationRecord> = read_jsonl(path)?;
    let records = parsed.strict(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_annotation().map_err(|e| anyhow::anyhow!("{}: record {}: {e}", path.display(), i + 1)))
        .collect()
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> anyhow::Result<()> {
    let records: Vec<AnnotationRecord> = annotations.iter().map(AnnotationRecord::from_annotation).collect();
    super::write_jsonl(path, &records)
}
