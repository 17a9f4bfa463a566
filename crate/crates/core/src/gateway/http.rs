//! Generic JSON-over-HTTP text generation provider.
//!
//! The request body starts from an optional static JSON object; the prompt and
//! decoding parameters are written into it at configurable dotted paths, and
//! the completion text is read back from another dotted path.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GatewayError, GenerationParams, TextProvider};
use crate::jsonpath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProfile {
    pub endpoint: String,
    /// Environment variable holding the credential.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    /// Send the credential as this query parameter instead of a header.
    #[serde(default)]
    pub auth_query_param: Option<String>,
    #[serde(default)]
    pub body: Option<Value>,
    pub prompt_path: String,
    pub response_path: String,
    #[serde(default)]
    pub model_path: Option<String>,
    #[serde(default)]
    pub temperature_path: Option<String>,
    #[serde(default)]
    pub top_p_path: Option<String>,
    /// Absent for APIs without a top-k knob; top_k is then dropped.
    #[serde(default)]
    pub top_k_path: Option<String>,
    #[serde(default)]
    pub max_tokens_path: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_auth_header() -> String {
    "Authorization".into()
}

fn default_auth_prefix() -> String {
    "Bearer ".into()
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct HttpProvider {
    name: String,
    profile: HttpProfile,
    agent: ureq::Agent,
    top_k_notice: AtomicBool,
}

impl HttpProvider {
    pub fn new(name: impl Into<String>, profile: HttpProfile) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(profile.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name: name.into(),
            profile,
            agent,
            top_k_notice: AtomicBool::new(false),
        }
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> Result<Value, GatewayError> {
        let p = &self.profile;
        let mut body = p.body.clone().unwrap_or_else(|| Value::Object(Default::default()));
        let mut put = |path: &Option<String>, v: Value| -> Result<(), GatewayError> {
            match path {
                Some(path) => jsonpath::set(&mut body, path, v).map_err(GatewayError::BadResponse),
                None => Ok(()),
            }
        };
        put(&Some(p.prompt_path.clone()), Value::from(prompt))?;
        put(&p.model_path, Value::from(params.provider_model.as_str()))?;
        put(&p.temperature_path, Value::from(params.temperature))?;
        put(&p.top_p_path, Value::from(params.top_p))?;
        put(&p.max_tokens_path, Value::from(params.max_output_tokens))?;
        if p.top_k_path.is_some() {
            put(&p.top_k_path, Value::from(params.top_k))?;
        } else if !self.top_k_notice.swap(true, Ordering::Relaxed) {
            log::info!("provider '{}' has no top_k field; top_k={} not sent", self.name, params.top_k);
        }
        Ok(body)
    }
}

impl TextProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, GatewayError> {
        let p = &self.profile;
        let credential = match &p.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::AuthMissing(var.clone()))?),
            None => None,
        };
        let body = self.request_body(prompt, params)?;
        let mut request = self.agent.post(&p.endpoint);
        if let Some(secret) = &credential {
            match &p.auth_query_param {
                Some(param) => request = request.query(param, secret),
                None => request = request.header(&p.auth_header, &format!("{}{secret}", p.auth_prefix)),
            }
        }
        let mut response = request.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout,
            other => GatewayError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 => return Err(GatewayError::RateLimited),
            408 => return Err(GatewayError::Timeout),
            _ => {
                return Err(GatewayError::ProviderError {
                    status,
                    message: text.chars().take(500).collect(),
                })
            }
        }
        let payload: Value = serde_json::from_str(&text).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        jsonpath::get(&payload, &p.response_path)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadResponse(format!("no string at '{}'", p.response_path)))
    }
}
