//! A rule-driven provider for fixtures and offline runs.
//!
//! Chat rules match substrings of the last message (and optionally the
//! system message); the first matching rule supplies the reply.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ScoreRequest, Transport, TransportError, WireReply, WireRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRule {
    pub contains: String,
    #[serde(default)]
    pub system_contains: Option<String>,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    pub contains: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    pub rules: Vec<ChatRule>,
    pub default_reply: Option<String>,
    pub score_rules: Vec<ScoreRule>,
    pub default_scores: Option<BTreeMap<String, f64>>,
    /// Texts containing any of these are flagged by moderation.
    pub flag: Vec<String>,
}

impl Script {
    /// JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> anyhow::Result<Script> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read script {}: {e}", path.display()))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Ok(toml::from_str(&text)?)
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedTransport {
    script: Script,
}

impl ScriptedTransport {
    pub fn new(script: Script) -> Self {
        ScriptedTransport { script }
    }
}

fn no_match(what: &str) -> TransportError {
    TransportError::Status { status: 404, body: format!("no scripted {what} matches") }
}

impl Transport for ScriptedTransport {
    fn chat(&self, req: &WireRequest) -> Result<WireReply, TransportError> {
        let last = req.messages.last().map_or("", |m| m.content.as_str());
        let system = req.messages.iter().find(|m| m.role == "system").map_or("", |m| m.content.as_str());
        self.script
            .rules
            .iter()
            .find(|r| {
                last.contains(&r.contains) && r.system_contains.as_ref().is_none_or(|s| system.contains(s.as_str()))
            })
            .map(|r| r.reply.clone())
            .or_else(|| self.script.default_reply.clone())
            .map(|text| WireReply { text, usage: Default::default() })
            .ok_or_else(|| no_match("reply"))
    }

    fn score(&self, req: &ScoreRequest) -> Result<BTreeMap<String, f64>, TransportError> {
        self.script
            .score_rules
            .iter()
            .find(|r| req.prompt.contains(&r.contains))
            .map(|r| r.scores.clone())
            .or_else(|| self.script.default_scores.clone())
            .ok_or_else(|| no_match("scores"))
    }

    fn moderate(&self, text: &str) -> Result<bool, TransportError> {
        Ok(self.script.flag.iter().any(|f| text.contains(f.as_str())))
    }
}
