//! Forecast-routed system prompts.
//!
//! The router is deliberately static: a forecast picks one of two fixed
//! templates (or none), and the template only ever occupies the system slot.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::annotate::{ChatMessage, ChatRequest, Role};
use crate::dialogue::{normalize_name, UnknownName};
use crate::forecast::ForecastLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AugmentationKind {
    ClarifyFirst,
    AnswerThenFollowUp,
    Passthrough,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 3] =
        [AugmentationKind::ClarifyFirst, AugmentationKind::AnswerThenFollowUp, AugmentationKind::Passthrough];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationKind::ClarifyFirst => "clarify_first",
            AugmentationKind::AnswerThenFollowUp => "answer_then_follow_up",
            AugmentationKind::Passthrough => "passthrough",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentationKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_name(s).as_str() {
            "clarifyfirst" | "clarify" => Ok(AugmentationKind::ClarifyFirst),
            "answerthenfollowup" | "followup" => Ok(AugmentationKind::AnswerThenFollowUp),
            "passthrough" | "none" => Ok(AugmentationKind::Passthrough),
            _ => Err(UnknownName(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAugmentation {
    pub kind: AugmentationKind,
    /// Empty for [`AugmentationKind::Passthrough`].
    pub template_text: String,
}

pub const DEFAULT_CLARIFY_TEMPLATE: &str = "Before answering, check whether the request is missing information you \
would need to respond well. If it is, ask the user one concise clarifying question and wait for the reply \
instead of answering.";

pub const DEFAULT_FOLLOW_UP_TEMPLATE: &str = "Answer the request. Then ask the user one targeted follow-up \
question about what they want to do next or how the answer could better fit their needs.";

/// Template text per non-passthrough kind, fixed for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionTemplates {
    pub clarify_first: String,
    pub answer_then_follow_up: String,
}

impl Default for InterventionTemplates {
    fn default() -> Self {
        InterventionTemplates {
            clarify_first: DEFAULT_CLARIFY_TEMPLATE.into(),
            answer_then_follow_up: DEFAULT_FOLLOW_UP_TEMPLATE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template for {0} is empty")]
pub struct EmptyTemplate(pub AugmentationKind);

impl InterventionTemplates {
    pub fn validate(&self) -> Result<(), EmptyTemplate> {
        if self.clarify_first.trim().is_empty() {
            return Err(EmptyTemplate(AugmentationKind::ClarifyFirst));
        }
        if self.answer_then_follow_up.trim().is_empty() {
            return Err(EmptyTemplate(AugmentationKind::AnswerThenFollowUp));
        }
        Ok(())
    }

    pub fn augmentation(&self, kind: AugmentationKind) -> PromptAugmentation {
        let template_text = match kind {
            AugmentationKind::ClarifyFirst => self.clarify_first.clone(),
            AugmentationKind::AnswerThenFollowUp => self.answer_then_follow_up.clone(),
            AugmentationKind::Passthrough => String::new(),
        };
        PromptAugmentation { kind, template_text }
    }
}

pub fn route_kind(pred: ForecastLabel) -> AugmentationKind {
    match pred {
        ForecastLabel::Address | ForecastLabel::Ambiguous => AugmentationKind::ClarifyFirst,
        ForecastLabel::Advance => AugmentationKind::AnswerThenFollowUp,
        ForecastLabel::None => AugmentationKind::Passthrough,
    }
}

pub fn route(pred: ForecastLabel, templates: &InterventionTemplates) -> PromptAugmentation {
    templates.augmentation(route_kind(pred))
}

/// The assistant call: an optional system message and the user's text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssistantRequest {
    pub system: Option<String>,
    pub user: String,
}

impl AssistantRequest {
    pub fn plain(user: impl Into<String>) -> Self {
        AssistantRequest { system: None, user: user.into() }
    }

    /// Passthrough returns the request unchanged; any other augmentation
    /// replaces the system message. The user text is never touched.
    pub fn augmented(self, aug: &PromptAugmentation) -> Self {
        match aug.kind {
            AugmentationKind::Passthrough => self,
            _ => AssistantRequest { system: Some(aug.template_text.clone()), user: self.user },
        }
    }

    pub fn to_chat(&self, model: &str, temperature: f64, max_output_tokens: u32) -> ChatRequest {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &self.system {
            messages.push(ChatMessage::new(Role::System, system.clone()));
        }
        messages.push(ChatMessage::new(Role::User, self.user.clone()));
        ChatRequest { model: model.into(), messages, temperature, max_output_tokens }
    }
}

pub fn apply(instruction: &str, aug: &PromptAugmentation) -> AssistantRequest {
    AssistantRequest::plain(instruction).augmented(aug)
}
