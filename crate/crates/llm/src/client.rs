use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};
use xbar_core::dse::{query_json_schema, ConstraintQuery};

use crate::audit::{AuditLog, AuditRecord};
use crate::config::EndpointConfig;
use crate::prompt::{build_prompt, RepoStats};
use crate::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

/// A validated query and the 1-based attempt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub query: ConstraintQuery,
    pub attempts: usize,
    pub raw: String,
}

/// Parses an assistant reply into a validated query. A single surrounding
/// code fence is tolerated.
pub fn parse_reply(content: &str) -> Result<ConstraintQuery, String> {
    let mut body = content.trim();
    if let Some(rest) = body.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        body = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    ConstraintQuery::from_json(body).map_err(|e| e.to_string())
}

pub struct LlmClient {
    cfg: EndpointConfig,
    stats: RepoStats,
    agent: ureq::Agent,
    audit: Option<Arc<AuditLog>>,
}

impl LlmClient {
    pub fn new(cfg: EndpointConfig, stats: RepoStats) -> Result<Self, LlmError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            cfg,
            stats,
            agent,
            audit: None,
        })
    }

    pub fn with_audit(mut self, log: Arc<AuditLog>) -> Self {
        self.audit = Some(log);
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// One chat-completion round trip; returns the assistant content.
    pub fn chat(&self, messages: &[Message]) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.cfg.model_name,
            messages,
            temperature: 0.0,
        };
        let mut req = self.agent.post(&self.cfg.completions_url());
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {}", key.expose()));
        }
        let mut resp = req.send_json(&body).map_err(|e| LlmError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Http { status, body: text });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::Protocol(format!("{e}: {text}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Protocol("response has no choices".into()))
    }

    fn log(&self, request: &str, attempt: usize, raw: &str, outcome: &str, error: Option<String>) {
        if let Some(log) = &self.audit {
            let r = AuditRecord {
                request: request.to_string(),
                attempt,
                model: self.cfg.model_name.clone(),
                raw: raw.to_string(),
                outcome: outcome.into(),
                error,
            };
            if let Err(e) = log.append(&r) {
                warn!("audit log: {e}");
            }
        }
    }

    /// Asks the endpoint for a query; a reply that fails validation is sent
    /// back with the error, for at most `max_retries` attempts in total.
    pub fn extract_query(&self, request: &str) -> Result<Extraction, LlmError> {
        let p = build_prompt(&query_json_schema(), &self.stats, request);
        let mut messages = vec![Message::new("system", p.system), Message::new("user", p.user)];
        let mut responses = Vec::new();
        let mut last_error = String::new();
        for attempt in 1..=self.cfg.max_retries {
            let raw = match self.chat(&messages) {
                Ok(r) => r,
                Err(e) => {
                    let body = match &e {
                        LlmError::Http { body, .. } => body.clone(),
                        _ => String::new(),
                    };
                    self.log(request, attempt, &body, "http_error", Some(e.to_string()));
                    return Err(e);
                }
            };
            match parse_reply(&raw) {
                Ok(query) => {
                    debug!(attempt, "query accepted");
                    self.log(request, attempt, &raw, "valid", None);
                    return Ok(Extraction {
                        query,
                        attempts: attempt,
                        raw,
                    });
                }
                Err(err) => {
                    debug!(attempt, %err, "query rejected");
                    self.log(request, attempt, &raw, "invalid", Some(err.clone()));
                    messages.push(Message::new("assistant", raw.clone()));
                    messages.push(Message::new(
                        "user",
                        format!("That reply was rejected: {err}\nReply again with a corrected JSON object only."),
                    ));
                    responses.push(raw);
                    last_error = err;
                }
            }
        }
        Err(LlmError::Exhausted {
            attempts: self.cfg.max_retries,
            last_error,
            responses,
        })
    }
}
