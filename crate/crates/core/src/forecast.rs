//! Forecasting the grounding category of a user's next turn.
//!
//! Training data interleaves each user message with a control token naming
//! the category of that user's *next* message (or [`ForecastLabel::None`] when
//! the conversation ends there). A trained model's scores for the four tokens
//! become a [`ForecastDistribution`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dialogue::{normalize_name, Dialogue, GroundingCategory, LabeledDialogue, Speaker, UnknownName};
use crate::metrics::{macro_auroc, MacroAuroc, MetricError};

/// The four forecast control labels. Declaration order is the argmax
/// tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ForecastLabel {
    Advance,
    Address,
    Ambiguous,
    None,
}

impl ForecastLabel {
    pub const ALL: [ForecastLabel; 4] =
        [ForecastLabel::Advance, ForecastLabel::Address, ForecastLabel::Ambiguous, ForecastLabel::None];

    pub fn as_str(self) -> &'static str {
        match self {
            ForecastLabel::Advance => "advance",
            ForecastLabel::Address => "address",
            ForecastLabel::Ambiguous => "ambiguous",
            ForecastLabel::None => "none",
        }
    }

    /// Reserved surface string registered as a single vocabulary entry.
    pub fn token(self) -> &'static str {
        match self {
            ForecastLabel::Advance => "<|fc_advance|>",
            ForecastLabel::Address => "<|fc_address|>",
            ForecastLabel::Ambiguous => "<|fc_ambiguous|>",
            ForecastLabel::None => "<|fc_none|>",
        }
    }

    pub fn from_token(token: &str) -> Option<ForecastLabel> {
        ForecastLabel::ALL.into_iter().find(|l| l.token() == token)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_category(c: GroundingCategory) -> ForecastLabel {
        match c {
            GroundingCategory::Advancing => ForecastLabel::Advance,
            GroundingCategory::Addressing => ForecastLabel::Address,
            GroundingCategory::Ambiguous => ForecastLabel::Ambiguous,
            GroundingCategory::None => ForecastLabel::None,
        }
    }
}

impl fmt::Display for ForecastLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForecastLabel {
    type Err = UnknownName;

    /// Accepts the canonical names, the category names, and the alternative
    /// token names `followup`, `fix`, `continue` and `end`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(l) = ForecastLabel::from_token(s.trim()) {
            return Ok(l);
        }
        match normalize_name(s).as_str() {
            "advance" | "advancing" | "followup" => Ok(ForecastLabel::Advance),
            "address" | "addressing" | "fix" => Ok(ForecastLabel::Address),
            "ambiguous" | "ambiguity" | "continue" => Ok(ForecastLabel::Ambiguous),
            "none" | "noaction" | "nogrounding" | "end" => Ok(ForecastLabel::None),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

/// Raw (log-scale) scores for the four forecast tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastDistribution {
    scores: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError<E> {
    #[error("backend returned no score for {0}")]
    MissingScore(ForecastLabel),
    #[error("score for {0} is not finite")]
    NonFinite(ForecastLabel),
    #[error("forecast backend: {0}")]
    Backend(E),
}

impl ForecastDistribution {
    pub fn new(scores: [f64; 4]) -> Result<Self, ForecastError<core::convert::Infallible>> {
        for label in ForecastLabel::ALL {
            if !scores[label.index()].is_finite() {
                return Err(ForecastError::NonFinite(label));
            }
        }
        Ok(ForecastDistribution { scores })
    }

    /// Builds a distribution from a partial map, failing on any missing label.
    pub fn from_map<E>(scores: &BTreeMap<ForecastLabel, f64>) -> Result<Self, ForecastError<E>> {
        let mut out = [0.0; 4];
        for label in ForecastLabel::ALL {
            let v = *scores.get(&label).ok_or(ForecastError::MissingScore(label))?;
            if !v.is_finite() {
                return Err(ForecastError::NonFinite(label));
            }
            out[label.index()] = v;
        }
        Ok(ForecastDistribution { scores: out })
    }

    pub fn raw_scores(&self) -> [f64; 4] {
        self.scores
    }

    pub fn score(&self, label: ForecastLabel) -> f64 {
        self.scores[label.index()]
    }

    /// Softmax over exactly the four tokens.
    pub fn probabilities(&self) -> [f64; 4] {
        let max = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = self.scores.map(|s| libm::exp(s - max));
        let total: f64 = exps.iter().sum();
        exps.map(|e| e / total)
    }

    pub fn probability(&self, label: ForecastLabel) -> f64 {
        self.probabilities()[label.index()]
    }

    /// Highest raw score; ties go to the earliest label in declaration order.
    pub fn argmax(&self) -> ForecastLabel {
        let mut best = ForecastLabel::Advance;
        for label in ForecastLabel::ALL {
            if self.score(label) > self.score(best) {
                best = label;
            }
        }
        best
    }
}

/// Source of forecast-token scores for an instruction.
pub trait ForecastBackend {
    type Error: fmt::Display;

    /// Scores keyed by label; a backend may omit labels, which
    /// [`forecast`] reports as an error.
    fn scores(&self, task_id: &str, instruction: &str) -> Result<BTreeMap<ForecastLabel, f64>, Self::Error>;
}

impl<B: ForecastBackend + ?Sized> ForecastBackend for &B {
    type Error = B::Error;

    fn scores(&self, task_id: &str, instruction: &str) -> Result<BTreeMap<ForecastLabel, f64>, Self::Error> {
        (**self).scores(task_id, instruction)
    }
}

pub fn forecast<B: ForecastBackend + ?Sized>(
    task_id: &str,
    instruction: &str,
    backend: &B,
) -> Result<ForecastDistribution, ForecastError<B::Error>> {
    let scores = backend.scores(task_id, instruction).map_err(ForecastError::Backend)?;
    ForecastDistribution::from_map(&scores)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DerivedLabels {
    /// `(user turn index, label for the turn after it)`.
    pub labels: Vec<(usize, ForecastLabel)>,
    /// User turns whose next user turn failed annotation.
    pub skipped: Vec<usize>,
}

/// Assigns each user turn the category of the next user turn, or `None` when
/// no user turn follows.
pub fn derive_forecast_labels(dialogue: &LabeledDialogue) -> DerivedLabels {
    let users: Vec<_> = dialogue.turns.iter().filter(|t| t.speaker == Speaker::User).collect();
    let mut out = DerivedLabels::default();
    for (pos, turn) in users.iter().enumerate() {
        match users.get(pos + 1) {
            None => out.labels.push((turn.index, ForecastLabel::None)),
            Some(next) => match next.act {
                Some(act) => out.labels.push((turn.index, ForecastLabel::from_category(act.category()))),
                None => out.skipped.push(turn.index),
            },
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    User,
    Token,
    Assistant,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::User => "user",
            SegmentKind::Token => "token",
            SegmentKind::Assistant => "assistant",
        }
    }
}

impl FromStr for SegmentKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" => Ok(SegmentKind::User),
            "token" => Ok(SegmentKind::Token),
            "assistant" => Ok(SegmentKind::Assistant),
            _ => Err(UnknownName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

/// Default loss weight on forecast-token positions.
pub const DEFAULT_LAMBDA: f64 = 2.0;

/// User segments stay in the training loss; only forecast tokens are
/// reweighted.
pub const USER_SEGMENTS_IN_LOSS: bool = true;

/// A conditional-training sequence: `m₀, g₁, r₀, m₁, g₂, r₁, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSequence {
    pub task_id: String,
    pub parts: Vec<Segment>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SequenceError {
    #[error("part {0} is not a known forecast token: {1:?}")]
    UnknownToken(usize, String),
    #[error("user part {0} is not followed by a forecast token")]
    MissingToken(usize),
    #[error("token part {0} does not follow a user part")]
    StrayToken(usize),
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
}

impl ConditionedSequence {
    /// Indices of the forecast-token parts, the positions weighted by `lambda`.
    pub fn weight_span(&self) -> Vec<usize> {
        self.parts.iter().enumerate().filter(|(_, p)| p.kind == SegmentKind::Token).map(|(i, _)| i).collect()
    }

    pub fn forecast_labels(&self) -> Vec<ForecastLabel> {
        self.parts
            .iter()
            .filter(|p| p.kind == SegmentKind::Token)
            .filter_map(|p| ForecastLabel::from_token(&p.text))
            .collect()
    }

    pub fn first_label(&self) -> Option<ForecastLabel> {
        self.forecast_labels().first().copied()
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(SequenceError::Lambda(self.lambda));
        }
        for (i, part) in self.parts.iter().enumerate() {
            match part.kind {
                SegmentKind::User => {
                    if self.parts.get(i + 1).map(|p| p.kind) != Some(SegmentKind::Token) {
                        return Err(SequenceError::MissingToken(i));
                    }
                }
                SegmentKind::Token => {
                    if ForecastLabel::from_token(&part.text).is_none() {
                        return Err(SequenceError::UnknownToken(i, part.text.clone()));
                    }
                    if i == 0 || self.parts[i - 1].kind != SegmentKind::User {
                        return Err(SequenceError::StrayToken(i));
                    }
                }
                SegmentKind::Assistant => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOutput {
    pub sequences: Vec<ConditionedSequence>,
    /// `(dialogue id, user turn)` where a sequence was cut short because the
    /// forecast label could not be derived.
    pub truncated: Vec<(String, usize)>,
    /// Dialogues with no annotations.
    pub unannotated: Vec<String>,
}

/// Builds one sequence per annotated dialogue. A sequence stops before the
/// first user turn whose label cannot be derived; dialogues that end up
/// empty are dropped.
pub fn build_training_sequences(dialogues: &[Dialogue], annotations: &[LabeledDialogue], lambda: f64) -> BuildOutput {
    let by_id: BTreeMap<&str, &LabeledDialogue> = annotations.iter().map(|l| (l.dialogue_id.as_str(), l)).collect();
    let mut out = BuildOutput::default();
    for d in dialogues {
        let Some(labeled) = by_id.get(d.dialogue_id.as_str()) else {
            out.unannotated.push(d.dialogue_id.clone());
            continue;
        };
        let derived = derive_forecast_labels(labeled);
        let labels: BTreeMap<usize, ForecastLabel> = derived.labels.into_iter().collect();
        let mut parts = Vec::new();
        for turn in &d.turns {
            match turn.speaker {
                Speaker::User => {
                    let Some(label) = labels.get(&turn.index) else {
                        out.truncated.push((d.dialogue_id.clone(), turn.index));
                        break;
                    };
                    parts.push(Segment { kind: SegmentKind::User, text: turn.text.clone() });
                    parts.push(Segment { kind: SegmentKind::Token, text: label.token().to_string() });
                }
                Speaker::Assistant => {
                    // An assistant turn before any user message has no forecast context.
                    if !parts.is_empty() {
                        parts.push(Segment { kind: SegmentKind::Assistant, text: turn.text.clone() });
                    }
                }
            }
        }
        if !parts.is_empty() {
            out.sequences.push(ConditionedSequence { task_id: d.dialogue_id.clone(), parts, lambda });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerClass {
    Count(usize),
    /// The size of the smallest class.
    Max,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BalanceError {
    #[error("no sequences start with the {0} token")]
    ClassAbsent(ForecastLabel),
    #[error("requested {want} per class but {label} has only {have}")]
    Insufficient { label: ForecastLabel, have: usize, want: usize },
}

/// Samples exactly `per_class` sequences for each first forecast label,
/// uniformly without replacement from a seeded stream. Within a class the
/// input order is preserved; classes appear in label order.
pub fn subsample_balanced(
    sequences: &[ConditionedSequence],
    per_class: PerClass,
    seed: u64,
) -> Result<Vec<ConditionedSequence>, BalanceError> {
    let mut groups: BTreeMap<ForecastLabel, Vec<&ConditionedSequence>> = BTreeMap::new();
    for s in sequences {
        if let Some(l) = s.first_label() {
            groups.entry(l).or_default().push(s);
        }
    }
    for label in ForecastLabel::ALL {
        if !groups.contains_key(&label) {
            return Err(BalanceError::ClassAbsent(label));
        }
    }
    let smallest = groups.values().map(Vec::len).min().unwrap_or(0);
    let want = match per_class {
        PerClass::Count(n) => n,
        PerClass::Max => smallest,
    };
    for (&label, g) in &groups {
        if g.len() < want {
            return Err(BalanceError::Insufficient { label, have: g.len(), want });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(want * groups.len());
    for group in groups.values() {
        let mut picked = rand::seq::index::sample(&mut rng, group.len(), want).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| group[i].clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForecastMode {
    /// One item per dialogue: the first user message.
    #[default]
    InitialPrompt,
    /// One item per user turn, conditioned on the conversation up to it.
    Prefixes,
}

/// A prompt to forecast with its gold next-turn label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecastItem {
    pub task_id: String,
    pub prompt: String,
    pub gold: ForecastLabel,
}

/// Task id used for a user turn in [`ForecastMode::Prefixes`].
pub fn prefix_task_id(dialogue_id: &str, turn: usize) -> String {
    format!("{dialogue_id}#{turn}")
}

pub fn forecast_items(
    dialogues: &[Dialogue],
    annotations: &[LabeledDialogue],
    mode: ForecastMode,
) -> Vec<ForecastItem> {
    let by_id: BTreeMap<&str, &LabeledDialogue> = annotations.iter().map(|l| (l.dialogue_id.as_str(), l)).collect();
    let mut items = Vec::new();
    for d in dialogues {
        let Some(labeled) = by_id.get(d.dialogue_id.as_str()) else { continue };
        let derived = derive_forecast_labels(labeled);
        match mode {
            ForecastMode::InitialPrompt => {
                if let (Some(first), Some(&(idx, gold))) = (d.first_user_turn(), derived.labels.first()) {
                    if idx == first.index {
                        items.push(ForecastItem { task_id: d.dialogue_id.clone(), prompt: first.text.clone(), gold });
                    }
                }
            }
            ForecastMode::Prefixes => {
                for (idx, gold) in derived.labels {
                    let prompt = d.turns.iter().take(idx + 1).map(|t| t.text.as_str()).collect::<Vec<_>>().join("\n\n");
                    items.push(ForecastItem { task_id: prefix_task_id(&d.dialogue_id, idx), prompt, gold });
                }
            }
        }
    }
    items
}

/// One-vs-rest AUROC of the normalized forecast probabilities per label.
pub fn evaluate_forecasts(
    predictions: &[(ForecastDistribution, ForecastLabel)],
) -> Result<MacroAuroc<ForecastLabel>, MetricError> {
    let scores: Vec<Vec<f64>> = predictions.iter().map(|(d, _)| d.probabilities().to_vec()).collect();
    let gold: Vec<ForecastLabel> = predictions.iter().map(|(_, g)| *g).collect();
    macro_auroc(&ForecastLabel::ALL, &scores, &gold)
}
