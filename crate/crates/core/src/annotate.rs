//! Prompt-based grounding-act labeling.
//!
//! The labeler is a chat model reached through a [`Completer`]. Each turn is
//! labeled independently: the request carries the few-shot definitions, the
//! conversation up to the target turn, and the target turn itself as the
//! final message.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::dialogue::{AnnotatedTurn, Annotation, Dialogue, FailureReason, GroundingAct, LabelFailure, Speaker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }
}

/// A provider-agnostic chat-completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Completion { text: text.into(), usage: Usage::default() }
    }
}

/// Anything that can answer a [`ChatRequest`].
pub trait Completer {
    type Error: fmt::Display;

    fn complete(&self, request: &ChatRequest) -> Result<Completion, Self::Error>;
}

impl<C: Completer + ?Sized> Completer for &C {
    type Error = C::Error;

    fn complete(&self, request: &ChatRequest) -> Result<Completion, Self::Error> {
        (**self).complete(request)
    }
}

/// One demonstration shown to the labeler: a short exchange whose last turn
/// carries `act`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    pub context: Vec<(Speaker, String)>,
    pub act: GroundingAct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelerSpec {
    pub prompt_template_id: String,
    pub few_shot_examples: Vec<FewShotExample>,
    pub model_name: String,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelerSpecError {
    #[error("few-shot examples do not cover {0}")]
    MissingExample(GroundingAct),
    #[error("max_retries must be at least 1")]
    NoRetries,
    #[error("temperature {0} outside [0, 1]")]
    Temperature(f64),
}

pub const DEFAULT_TEMPLATE_ID: &str = "grounding-acts-v1";

impl LabelerSpec {
    pub fn new(model_name: impl Into<String>) -> Self {
        LabelerSpec {
            prompt_template_id: DEFAULT_TEMPLATE_ID.to_string(),
            few_shot_examples: default_examples(),
            model_name: model_name.into(),
            max_retries: 3,
            temperature: 0.0,
            max_output_tokens: 16,
        }
    }

    pub fn validate(&self) -> Result<(), LabelerSpecError> {
        for act in GroundingAct::ALL {
            if !self.few_shot_examples.iter().any(|e| e.act == act) {
                return Err(LabelerSpecError::MissingExample(act));
            }
        }
        if self.max_retries == 0 {
            return Err(LabelerSpecError::NoRetries);
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LabelerSpecError::Temperature(self.temperature));
        }
        Ok(())
    }

    /// Identifies both the model and the prompt template.
    pub fn annotator_id(&self) -> String {
        format!("{}/{}", self.model_name, self.prompt_template_id)
    }
}

fn ex(turns: &[(Speaker, &str)], act: GroundingAct) -> FewShotExample {
    FewShotExample { context: turns.iter().map(|&(s, t)| (s, t.to_string())).collect(), act }
}

/// Built-in demonstrations, one or more per act.
pub fn default_examples() -> Vec<FewShotExample> {
    use GroundingAct as A;
    use Speaker::{Assistant as Bot, User};
    let story = "Once upon a time, in a quiet forest, a fox found a lantern.";
    alloc::vec![
        ex(&[(User, "Write a story.")], A::Instruction),
        ex(&[(User, "Write a story."), (Bot, story)], A::NextTurn),
        ex(&[(User, "Write a story."), (Bot, "Sure, I can write you a story. Once upon a time...")], A::Acknowledge),
        ex(&[(User, "Write a story."), (Bot, story), (User, "Can you make it longer?")], A::FollowUp),
        ex(
            &[(User, "Write a story."), (Bot, "Writing a story needs a plan: first pick a theme, then outline... Also, here is an example story...")],
            A::Overresponse,
        ),
        ex(&[(User, "Write a story."), (Bot, "Do you want a finished story, or a plan for writing one?")], A::Clarify),
        ex(
            &[(User, "Write a story."), (Bot, "Here is a plan and a story..."), (User, "Just give me the story, nothing else.")],
            A::Repair,
        ),
        ex(&[(User, "Write a story."), (Bot, story), (User, "Please write a story.")], A::Reformulate),
    ]
}

const DEFINITIONS: &str = "\
You label turns in conversations between a user and an AI assistant with the grounding act the turn performs.

Acts:
- Instruction: the opening request of the conversation. Only the first turn can be an Instruction.
- Next Turn: the expected next move given the previous turn, such as answering or carrying out the request.
- Acknowledge: explicitly signals understanding (\"I see\", \"OK\") or repeats part of the other speaker's words to show it was understood.
- Follow-up: builds on a previous utterance and asks for more, such as a new related request or a question seeking additional information.
- Overresponse: gives more than was reasonably asked for, anticipating needs nobody stated.
- Clarify: disambiguates or asks about what the other speaker meant before proceeding.
- Repair: directly corrects a misunderstanding by the other speaker.
- Reformulate: restates one's own earlier request with the same meaning because it was not understood.

Answer with the act name only.";

fn speaker_tag(s: Speaker) -> &'static str {
    match s {
        Speaker::User => "USER",
        Speaker::Assistant => "ASSISTANT",
    }
}

fn render_turns<'a, I: IntoIterator<Item = (usize, Speaker, &'a str)>>(turns: I) -> String {
    let mut out = String::new();
    for (i, s, text) in turns {
        out.push_str(&format!("[{i}] {}: {}\n", speaker_tag(s), text));
    }
    out
}

/// The request used to label turn `turn` of `dialogue` on the given attempt
/// (0-based). Retries append a stricter reminder, so each attempt has a
/// distinct cache identity.
pub fn build_label_request(spec: &LabelerSpec, dialogue: &Dialogue, turn: usize, attempt: u32) -> ChatRequest {
    let mut system = String::from(DEFINITIONS);
    system.push_str("\n\nExamples:\n");
    for e in &spec.few_shot_examples {
        let last = e.context.len().saturating_sub(1);
        system.push_str(&render_turns(e.context.iter().enumerate().map(|(i, (s, t))| (i, *s, t.as_str()))));
        system.push_str(&format!("Label for [{last}]: {}\n\n", e.act.display_name()));
    }

    let context = if turn == 0 {
        String::from("Conversation so far: (this is the first turn)")
    } else {
        let mut c = String::from("Conversation so far:\n");
        c.push_str(&render_turns(dialogue.turns[..turn].iter().map(|t| (t.index, t.speaker, t.text.as_str()))));
        c
    };

    let target = &dialogue.turns[turn];
    let mut ask = format!("Turn to label, [{}] {}:\n{}\n\nLabel:", turn, speaker_tag(target.speaker), target.text);
    if attempt > 0 {
        ask.push_str(&format!(
            "\n(Attempt {}: reply with exactly one of Instruction, Next Turn, Acknowledge, Follow-up, Overresponse, Clarify, Repair, Reformulate.)",
            attempt + 1
        ));
    }

    ChatRequest {
        model: spec.model_name.clone(),
        messages: alloc::vec![
            ChatMessage::new(Role::System, system),
            ChatMessage::new(Role::User, context),
            ChatMessage::new(Role::User, ask),
        ],
        temperature: spec.temperature,
        max_output_tokens: spec.max_output_tokens,
    }
}

/// Extracts an act from a labeler reply, case-insensitively, accepting
/// aliases, surrounding punctuation and a `Label:`-style prefix. An
/// `Instruction` label on a later turn counts as unparsable.
pub fn parse_label(raw: &str, turn: usize) -> Option<GroundingAct> {
    let trimmed = raw.trim();
    let first_line = trimmed.lines().next().unwrap_or("");
    let after_colon = first_line.rsplit(':').next().unwrap_or("");
    [trimmed, first_line, after_colon]
        .into_iter()
        .find_map(|candidate| candidate.parse::<GroundingAct>().ok())
        .filter(|act| act.allowed_at(turn))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotateError<E> {
    #[error("turn {turn} out of range for dialogue {dialogue_id} with {len} turns")]
    TurnOutOfRange { dialogue_id: String, turn: usize, len: usize },
    #[error("completion backend: {0}")]
    Backend(E),
}

/// Labels a single turn, retrying up to `max_retries` attempts on replies
/// that do not parse. Exhausted retries yield [`Annotation::Failed`];
/// backend errors propagate.
pub fn annotate_turn<C: Completer + ?Sized>(
    dialogue: &Dialogue,
    turn: usize,
    spec: &LabelerSpec,
    completer: &C,
) -> Result<Annotation, AnnotateError<C::Error>> {
    let Some(target) = dialogue.turns.get(turn) else {
        return Err(AnnotateError::TurnOutOfRange {
            dialogue_id: dialogue.dialogue_id.clone(),
            turn,
            len: dialogue.turns.len(),
        });
    };
    let attempts = spec.max_retries.max(1);
    let mut last_raw = String::new();
    for attempt in 0..attempts {
        let request = build_label_request(spec, dialogue, turn, attempt);
        let reply = completer.complete(&request).map_err(AnnotateError::Backend)?;
        if let Some(act) = parse_label(&reply.text, turn) {
            return Ok(Annotation::Labeled(AnnotatedTurn {
                dialogue_id: dialogue.dialogue_id.clone(),
                turn,
                speaker: target.speaker,
                act,
                annotator_id: spec.annotator_id(),
                raw_label_text: reply.text,
            }));
        }
        last_raw = reply.text;
    }
    Ok(Annotation::Failed(LabelFailure {
        dialogue_id: dialogue.dialogue_id.clone(),
        turn,
        speaker: target.speaker,
        annotator_id: spec.annotator_id(),
        raw_label_text: last_raw,
        reason: FailureReason::Unparsable { attempts: attempts as usize },
    }))
}

/// Labels every turn of every dialogue, in corpus order. Backend errors are
/// recorded as failures for that turn and never abort the corpus.
pub fn annotate_corpus<C: Completer + ?Sized>(
    dialogues: &[Dialogue],
    spec: &LabelerSpec,
    completer: &C,
) -> Vec<Annotation> {
    let mut out = Vec::new();
    for d in dialogues {
        for turn in 0..d.turns.len() {
            out.push(annotate_or_record(d, turn, spec, completer));
        }
    }
    out
}

/// [`annotate_turn`] with backend errors folded into a failure record.
pub fn annotate_or_record<C: Completer + ?Sized>(
    dialogue: &Dialogue,
    turn: usize,
    spec: &LabelerSpec,
    completer: &C,
) -> Annotation {
    match annotate_turn(dialogue, turn, spec, completer) {
        Ok(a) => a,
        Err(e) => Annotation::Failed(LabelFailure {
            dialogue_id: dialogue.dialogue_id.clone(),
            turn,
            speaker: dialogue.turns.get(turn).map_or(Speaker::User, |t| t.speaker),
            annotator_id: spec.annotator_id(),
            raw_label_text: String::new(),
            reason: FailureReason::Backend(match e {
                AnnotateError::Backend(inner) => inner.to_string(),
                other => other.to_string(),
            }),
        }),
    }
}
