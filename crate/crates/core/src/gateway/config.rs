//! Gateway configuration file (TOML).
//!
//! ```toml
//! [endpoint]
//! kind = "openai"                        # "openai" or "mock"
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4-turbo"
//! api_key_env = "OPENAI_API_KEY"         # credentials only ever come from the environment
//! temperature = 0.0
//! max_tokens = 2048
//! request_timeout_secs = 120
//!
//! [retry]
//! max_retries = 3
//! initial_backoff_ms = 500
//! max_backoff_ms = 8000
//!
//! [limits]
//! max_in_flight = 4
//! context_window = 8192                  # optional proactive guard, in tokens
//!
//! [cache]
//! enabled = true
//! dir = "cache"                          # relative to the run output directory
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::openai::OpenAiBackend;
use super::{GatewayError, RetryPolicy, DEFAULT_MAX_TOKENS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    OpenAi,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_timeout_secs: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::OpenAi,
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_in_flight: usize,
    pub context_window: Option<usize>,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            context_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub enabled: bool,
    pub dir: PathBuf,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            dir: PathBuf::from("cache"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub endpoint: EndpointConfig,
    pub retry: RetryPolicy,
    pub limits: LimitsConfig,
    pub cache: CacheConfig,
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let cfg: Self = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let e = &self.endpoint;
        if e.model.trim().is_empty() {
            return Err(GatewayError::Config("endpoint.model is empty".into()));
        }
        if e.max_tokens == 0 {
            return Err(GatewayError::Config("endpoint.max_tokens must be positive".into()));
        }
        if !e.temperature.is_finite() || e.temperature < 0.0 {
            return Err(GatewayError::Config("endpoint.temperature must be >= 0".into()));
        }
        if e.temperature != 0.0 {
            log::warn!("temperature {} is not 0; runs will not be reproducible", e.temperature);
        }
        if self.limits.max_in_flight == 0 {
            return Err(GatewayError::Config("limits.max_in_flight must be positive".into()));
        }
        Ok(())
    }

    /// Builds the live backend, reading the API key from the environment.
    /// A missing key is only an error when the endpoint is the public
    /// OpenAI API; self-hosted gateways often need none.
    pub fn live_backend(&self) -> Result<OpenAiBackend, GatewayError> {
        let e = &self.endpoint;
        let key = std::env::var(&e.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() && e.base_url.contains("api.openai.com") {
            return Err(GatewayError::MissingCredentials(e.api_key_env.clone()));
        }
        Ok(OpenAiBackend::new(
            &e.base_url,
            key,
            Duration::from_secs(e.request_timeout_secs),
        ))
    }
}
