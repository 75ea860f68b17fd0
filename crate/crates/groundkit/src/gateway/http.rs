//! Chat-completions over HTTP.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;

use super::{GatewayConfig, ScoreRequest, Transport, TransportError, WireReply, WireRequest, WireUsage};

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key_env: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: WireUsage,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct ModerationResult {
    flagged: bool,
}

#[derive(Deserialize)]
struct ModerationResponse {
    results: Vec<ModerationResult>,
}

impl HttpTransport {
    pub fn new(cfg: &GatewayConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            endpoint: cfg.endpoint.trim_end_matches('/').to_string(),
            api_key_env: cfg.api_key_env.clone(),
        }
    }

    fn post<T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &impl serde::Serialize,
    ) -> Result<T, TransportError> {
        let url = format!("{}/{path}", self.endpoint);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var).map_err(|_| TransportError::MissingCredentials(var.clone()))?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_string(body).map_err(|e| TransportError::Decode(e.to_string()))?;
        let mut resp = req.send(payload.as_bytes()).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

impl Transport for HttpTransport {
    fn chat(&self, req: &WireRequest) -> Result<WireReply, TransportError> {
        let resp: ChatResponse = self.post("chat/completions", req)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Decode("response has no message content".into()))?;
        Ok(WireReply { text, usage: resp.usage })
    }

    fn score(&self, req: &ScoreRequest) -> Result<BTreeMap<String, f64>, TransportError> {
        Ok(self.post::<ScoreResponse>("score", req)?.scores)
    }

    fn moderate(&self, text: &str) -> Result<bool, TransportError> {
        let resp: ModerationResponse = self.post("moderations", &serde_json::json!({ "input": text }))?;
        resp.results.first().map(|r| r.flagged).ok_or_else(|| TransportError::Decode("empty moderation results".into()))
    }
}
