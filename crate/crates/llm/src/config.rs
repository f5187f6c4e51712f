use std::fmt;
use std::path::Path;

use serde::Deserialize;
use ureq::http::Uri;

use crate::LlmError;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "XBAR_LLM_API_KEY";

/// Bearer token. Debug and Display print a placeholder, so the key cannot
/// reach logs through formatting.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

impl fmt::Display for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

/// Endpoint file, TOML:
///
/// ```toml
/// base_url = "http://127.0.0.1:8000/v1"   # `/chat/completions` is appended
/// model_name = "qwen2.5-7b-instruct"
/// timeout_s = 60                          # optional, default 60
/// max_retries = 3                         # optional, default 3, at least 1
/// ```
///
/// The key is never read from the file; it comes from `XBAR_LLM_API_KEY`.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key: Option<ApiKey>,
    pub timeout_s: f64,
    pub max_retries: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    base_url: String,
    model_name: String,
    #[serde(default = "default_timeout")]
    timeout_s: f64,
    #[serde(default = "default_retries")]
    max_retries: usize,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> usize {
    3
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Result<Self, LlmError> {
        let c = Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: None,
            timeout_s: default_timeout(),
            max_retries: default_retries(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Parses the TOML form and takes the key from the environment.
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::from_toml_with_key(text, key.map(ApiKey::new))
    }

    pub fn from_toml_with_key(text: &str, api_key: Option<ApiKey>) -> Result<Self, LlmError> {
        let f: FileConfig = toml::from_str(text).map_err(|e| LlmError::Config(e.to_string()))?;
        let c = Self {
            base_url: f.base_url,
            model_name: f.model_name,
            api_key,
            timeout_s: f.timeout_s,
            max_retries: f.max_retries,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let uri: Uri = self
            .base_url
            .parse()
            .map_err(|e| LlmError::Config(format!("base_url `{}`: {e}", self.base_url)))?;
        if !matches!(uri.scheme_str(), Some("http" | "https")) || uri.host().is_none_or(str::is_empty) {
            return Err(LlmError::Config(format!(
                "base_url `{}` must be an absolute http(s) URL",
                self.base_url
            )));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::Config(format!("timeout_s must be positive, got {}", self.timeout_s)));
        }
        if self.max_retries < 1 {
            return Err(LlmError::Config("max_retries must be at least 1".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}
