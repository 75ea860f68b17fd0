//! Restart equivalence decided by a chat model.

use groundkit_core::analysis::{EquivalenceJudge, JudgeError};
use groundkit_core::annotate::{ChatMessage, ChatRequest, Completer, Role};

const INSTRUCTIONS: &str = "You compare two requests a user sent to an assistant a few minutes apart. \
Answer \"yes\" if the second request asks for the same thing as the first, either restated or corrected. \
Answer \"no\" otherwise. Reply with one word.";

pub struct LlmJudge<C> {
    pub completer: C,
    pub model: String,
}

impl<C> LlmJudge<C> {
    pub fn request(&self, earlier: &str, later: &str) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![
                ChatMessage::new(Role::System, INSTRUCTIONS),
                ChatMessage::new(
                    Role::User,
                    format!("First request:\n{earlier}\n\nSecond request:\n{later}\n\nSame request?"),
                ),
            ],
            temperature: 0.0,
            max_output_tokens: 4,
        }
    }
}

/// `yes`/`no` from the first word of a reply.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let word: String = reply.trim().chars().take_while(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

impl<C: Completer> EquivalenceJudge for LlmJudge<C> {
    fn equivalent(&self, earlier: &str, later: &str) -> Result<bool, JudgeError> {
        let reply = self.completer.complete(&self.request(earlier, later)).map_err(|e| JudgeError(e.to_string()))?;
        parse_verdict(&reply.text).ok_or_else(|| JudgeError(format!("unparsable verdict {:?}", reply.text)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("Yes."), Some(true));
        assert_eq!(parse_verdict(" no"), Some(false));
        assert_eq!(parse_verdict("maybe"), None);
    }
}
