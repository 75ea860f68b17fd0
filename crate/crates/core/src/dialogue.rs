//! Conversations, turns and the grounding-act taxonomy.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

/// Who produced a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Speaker {
    User,
    Assistant,
}

impl Speaker {
    pub const ALL: [Speaker; 2] = [Speaker::User, Speaker::Assistant];

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Speaker {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" | "human" => Ok(Speaker::User),
            "assistant" | "system" | "bot" | "wizard" => Ok(Speaker::Assistant),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

/// A UTC instant with second precision, stored as seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn seconds(self) -> i64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: Option<Timestamp>,
}

/// Which upstream log family a dialogue came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    WildChat,
    MultiWoz,
    Generic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::WildChat => "wildchat",
            Source::MultiWoz => "multiwoz",
            Source::Generic => "generic",
        }
    }
}

impl FromStr for Source {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_name(s).as_str() {
            "wildchat" | "wildchatlike" => Ok(Source::WildChat),
            "multiwoz" | "multiwozlike" => Ok(Source::MultiWoz),
            "generic" | "canonical" => Ok(Source::Generic),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

/// An ordered human-assistant conversation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub user_id: Option<String>,
    pub source: Source,
    pub turns: Vec<Turn>,
    /// Upstream moderation flag, honoured by corpus filtering.
    pub toxic: bool,
}

impl Dialogue {
    /// Builds a dialogue from `(speaker, text, timestamp)` triples, assigning
    /// contiguous turn indices.
    pub fn from_turns<I>(dialogue_id: impl Into<String>, user_id: Option<String>, source: Source, turns: I) -> Self
    where
        I: IntoIterator<Item = (Speaker, String, Option<Timestamp>)>,
    {
        let turns = turns
            .into_iter()
            .enumerate()
            .map(|(index, (speaker, text, timestamp))| Turn { index, speaker, text, timestamp })
            .collect();
        Dialogue { dialogue_id: dialogue_id.into(), user_id, source, turns, toxic: false }
    }

    pub fn first_user_turn(&self) -> Option<&Turn> {
        self.turns.iter().find(|t| t.speaker == Speaker::User)
    }

    pub fn start_time(&self) -> Option<Timestamp> {
        self.turns.first().and_then(|t| t.timestamp)
    }
}

/// Turn-level grounding acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroundingAct {
    Instruction,
    NextTurn,
    Acknowledge,
    FollowUp,
    Overresponse,
    Clarify,
    Repair,
    Reformulate,
}

impl GroundingAct {
    pub const ALL: [GroundingAct; 8] = [
        GroundingAct::Instruction,
        GroundingAct::NextTurn,
        GroundingAct::Acknowledge,
        GroundingAct::FollowUp,
        GroundingAct::Overresponse,
        GroundingAct::Clarify,
        GroundingAct::Repair,
        GroundingAct::Reformulate,
    ];

    /// Canonical machine name used in every output file.
    pub fn as_str(self) -> &'static str {
        match self {
            GroundingAct::Instruction => "instruction",
            GroundingAct::NextTurn => "next_turn",
            GroundingAct::Acknowledge => "acknowledge",
            GroundingAct::FollowUp => "follow_up",
            GroundingAct::Overresponse => "overresponse",
            GroundingAct::Clarify => "clarify",
            GroundingAct::Repair => "repair",
            GroundingAct::Reformulate => "reformulate",
        }
    }

    /// Human-facing label, as shown to the labeling model.
    pub fn display_name(self) -> &'static str {
        match self {
            GroundingAct::Instruction => "Instruction",
            GroundingAct::NextTurn => "Next Turn",
            GroundingAct::Acknowledge => "Acknowledge",
            GroundingAct::FollowUp => "Follow-up",
            GroundingAct::Overresponse => "Overresponse",
            GroundingAct::Clarify => "Clarify",
            GroundingAct::Repair => "Repair",
            GroundingAct::Reformulate => "Reformulate",
        }
    }

    /// `Instruction` is reserved for the opening turn.
    pub fn allowed_at(self, turn_index: usize) -> bool {
        self != GroundingAct::Instruction || turn_index == 0
    }

    pub fn category(self) -> GroundingCategory {
        category_of(self)
    }
}

impl fmt::Display for GroundingAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroundingAct {
    type Err = UnknownName;

    /// Case-insensitive; separators are ignored, so `Next Turn`, `next_turn`
    /// and `NEXT-TURN` all parse. `Overcontinue` is accepted for
    /// [`GroundingAct::Overresponse`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let act = match normalize_name(s).as_str() {
            "instruction" => GroundingAct::Instruction,
            "nextturn" | "continue" => GroundingAct::NextTurn,
            "acknowledge" | "acknowledgment" | "acknowledgement" => GroundingAct::Acknowledge,
            "followup" => GroundingAct::FollowUp,
            "overresponse" | "overcontinue" => GroundingAct::Overresponse,
            "clarify" | "clarification" => GroundingAct::Clarify,
            "repair" => GroundingAct::Repair,
            "reformulate" | "reformulation" => GroundingAct::Reformulate,
            _ => return Err(UnknownName(s.to_string())),
        };
        Ok(act)
    }
}

/// Rollup of acts into the grounding outcome they signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroundingCategory {
    Advancing,
    Ambiguous,
    Addressing,
    None,
}

impl GroundingCategory {
    pub const ALL: [GroundingCategory; 4] = [
        GroundingCategory::Advancing,
        GroundingCategory::Ambiguous,
        GroundingCategory::Addressing,
        GroundingCategory::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroundingCategory::Advancing => "advancing",
            GroundingCategory::Ambiguous => "ambiguous",
            GroundingCategory::Addressing => "addressing",
            GroundingCategory::None => "none",
        }
    }
}

impl fmt::Display for GroundingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroundingCategory {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_name(s).as_str() {
            "advancing" | "advance" => Ok(GroundingCategory::Advancing),
            "ambiguous" | "ambiguity" => Ok(GroundingCategory::Ambiguous),
            "addressing" | "address" => Ok(GroundingCategory::Addressing),
            "none" | "noaction" | "nogrounding" => Ok(GroundingCategory::None),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

pub fn category_of(act: GroundingAct) -> GroundingCategory {
    match act {
        GroundingAct::NextTurn | GroundingAct::Acknowledge | GroundingAct::FollowUp => GroundingCategory::Advancing,
        GroundingAct::Overresponse | GroundingAct::Clarify => GroundingCategory::Ambiguous,
        GroundingAct::Repair | GroundingAct::Reformulate => GroundingCategory::Addressing,
        GroundingAct::Instruction => GroundingCategory::None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown name {0:?}")]
pub struct UnknownName(pub String);

/// Lowercase and drop everything that is not a letter or digit.
pub(crate) fn normalize_name(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IssueKind {
    NoTurns,
    Turn0NotUser,
    EmptyTurn,
    IndexMismatch,
    TimestampOrder,
    NonAlternating,
}

impl IssueKind {
    pub fn code(self) -> &'static str {
        match self {
            IssueKind::NoTurns => "no-turns",
            IssueKind::Turn0NotUser => "turn0-not-user",
            IssueKind::EmptyTurn => "empty-turn",
            IssueKind::IndexMismatch => "index-mismatch",
            IssueKind::TimestampOrder => "timestamp-order",
            IssueKind::NonAlternating => "non-alternating",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            IssueKind::NonAlternating => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub kind: IssueKind,
    pub turn: Option<usize>,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.turn {
            Some(t) => write!(f, "{} (turn {t})", self.kind.code()),
            None => f.write_str(self.kind.code()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.kind.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.kind.severity() == Severity::Warning)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }
}

/// Lists every violated dialogue invariant. Consecutive same-role turns are
/// reported as warnings only.
pub fn validate_dialogue(d: &Dialogue) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |kind, turn| issues.push(Issue { kind, turn });

    if d.turns.is_empty() {
        push(IssueKind::NoTurns, None);
        return ValidationReport { issues };
    }
    if d.turns[0].speaker != Speaker::User {
        push(IssueKind::Turn0NotUser, Some(0));
    }
    let mut last_ts: Option<Timestamp> = None;
    for (pos, turn) in d.turns.iter().enumerate() {
        if turn.index != pos {
            push(IssueKind::IndexMismatch, Some(pos));
        }
        if turn.text.trim().is_empty() {
            push(IssueKind::EmptyTurn, Some(pos));
        }
        if let Some(ts) = turn.timestamp {
            if matches!(last_ts, Some(prev) if ts < prev) {
                push(IssueKind::TimestampOrder, Some(pos));
            }
            last_ts = Some(ts);
        }
        if pos > 0 && d.turns[pos - 1].speaker == turn.speaker {
            push(IssueKind::NonAlternating, Some(pos));
        }
    }
    ValidationReport { issues }
}

/// A successfully labeled turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedTurn {
    pub dialogue_id: String,
    pub turn: usize,
    pub speaker: Speaker,
    pub act: GroundingAct,
    pub annotator_id: String,
    pub raw_label_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureReason {
    /// The labeler never produced a parsable act.
    Unparsable { attempts: usize },
    /// The completion backend returned an error.
    Backend(String),
}

/// A turn the annotator could not label. Excluded from statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFailure {
    pub dialogue_id: String,
    pub turn: usize,
    pub speaker: Speaker,
    pub annotator_id: String,
    pub raw_label_text: String,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Annotation {
    Labeled(AnnotatedTurn),
    Failed(LabelFailure),
}

impl Annotation {
    pub fn dialogue_id(&self) -> &str {
        match self {
            Annotation::Labeled(a) => &a.dialogue_id,
            Annotation::Failed(f) => &f.dialogue_id,
        }
    }

    pub fn turn(&self) -> usize {
        match self {
            Annotation::Labeled(a) => a.turn,
            Annotation::Failed(f) => f.turn,
        }
    }

    pub fn speaker(&self) -> Speaker {
        match self {
            Annotation::Labeled(a) => a.speaker,
            Annotation::Failed(f) => f.speaker,
        }
    }

    pub fn act(&self) -> Option<GroundingAct> {
        match self {
            Annotation::Labeled(a) => Some(a.act),
            Annotation::Failed(_) => None,
        }
    }
}

/// One turn of an annotated dialogue; `act` is `None` for labeling failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub act: Option<GroundingAct>,
}

/// The annotation view of one dialogue that the statistics operate on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDialogue {
    pub dialogue_id: String,
    pub turns: Vec<LabeledTurn>,
}

impl LabeledDialogue {
    pub fn new(
        dialogue_id: impl Into<String>,
        turns: impl IntoIterator<Item = (Speaker, Option<GroundingAct>)>,
    ) -> Self {
        let turns =
            turns.into_iter().enumerate().map(|(index, (speaker, act))| LabeledTurn { index, speaker, act }).collect();
        LabeledDialogue { dialogue_id: dialogue_id.into(), turns }
    }

    /// Groups flat annotation records by dialogue, ordered by dialogue id and
    /// then by turn index. Result is independent of input order.
    pub fn group(annotations: &[Annotation]) -> Vec<LabeledDialogue> {
        let mut by_dialogue: BTreeMap<&str, Vec<LabeledTurn>> = BTreeMap::new();
        for a in annotations {
            by_dialogue.entry(a.dialogue_id()).or_default().push(LabeledTurn {
                index: a.turn(),
                speaker: a.speaker(),
                act: a.act(),
            });
        }
        by_dialogue
            .into_iter()
            .map(|(id, mut turns)| {
                turns.sort_by_key(|t| t.index);
                LabeledDialogue { dialogue_id: id.to_string(), turns }
            })
            .collect()
    }
}
