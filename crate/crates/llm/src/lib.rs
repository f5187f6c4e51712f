//! Natural-language front end for constraint queries.
//!
//! A request such as "lowest power design under 3 W" is sent to any
//! OpenAI-compatible chat endpoint together with the query JSON schema and
//! the metric ranges of the repository. The assistant reply is parsed and
//! validated as a [`ConstraintQuery`](xbar_core::dse::ConstraintQuery); a
//! rejected reply is sent back with the validation error appended, up to
//! `max_retries` attempts. The deterministic DSL parser of `xbar_core::dse`
//! remains the offline path and shares every downstream step.
//!
//! [`passk`] scores a backend on a task suite by the attempt at which its
//! query first reproduces the expected top-ranked design.

pub mod audit;
pub mod client;
pub mod config;
pub mod mock;
pub mod passk;
pub mod prompt;

use thiserror::Error;

pub use audit::{AuditLog, AuditRecord};
pub use client::{parse_reply, Extraction, LlmClient, Message};
pub use config::{ApiKey, EndpointConfig, API_KEY_ENV};
pub use mock::{MockReply, MockScript, MockServer};
pub use passk::{
    passk_harness, shipped_suite, Category, CategoryScore, DslBackend, PassKReport, QueryBackend, Task, TaskOutcome,
};
pub use prompt::{build_prompt, Prompt, RepoStats};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error("request failed: {0}")]
    Network(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("no valid query after {attempts} attempts; last error: {last_error}")]
    Exhausted {
        attempts: usize,
        last_error: String,
        /// Raw assistant replies, in attempt order.
        responses: Vec<String>,
    },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("task suite: {0}")]
    Suite(String),
}
