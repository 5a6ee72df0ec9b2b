use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use super::{BackendHandle, GatewayError, HttpBackend, RequestDefaults, ResponseCache, RetryPolicy, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

/// One entry of a backend config file.
///
/// Decoding parameters live here rather than in code; the defaults are
/// temperature 0.0 and 512 max tokens.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    pub model_id: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub fixture_path: Option<PathBuf>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
    #[serde(default)]
    pub initial_backoff_ms: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Many(Vec<BackendConfig>),
    One(BackendConfig),
}

/// Reads a config file holding one backend object or an array of them.
/// Relative fixture paths are resolved against the file's directory.
pub fn load_backend_configs(path: impl AsRef<Path>) -> Result<Vec<BackendConfig>, GatewayError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    let parsed: ConfigFile =
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    let mut configs = match parsed {
        ConfigFile::Many(v) => v,
        ConfigFile::One(c) => vec![c],
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for c in &mut configs {
        if let Some(fixture) = &c.fixture_path {
            if fixture.is_relative() {
                c.fixture_path = Some(base.join(fixture));
            }
        }
    }
    Ok(configs)
}

impl BackendConfig {
    pub fn defaults(&self) -> RequestDefaults {
        let d = RequestDefaults::default();
        RequestDefaults {
            model_id: self.model_id.clone(),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
        }
    }

    /// Instantiates the backend. API keys are read from the named environment
    /// variable; a missing variable surfaces as `BackendUnavailable` on first use.
    pub fn build(&self, cache: Option<Arc<ResponseCache>>) -> Result<BackendHandle, GatewayError> {
        let handle = match self.kind {
            BackendKind::Scripted => {
                let fixture = self.fixture_path.as_ref().ok_or_else(|| {
                    GatewayError::Config(format!("scripted backend `{}` needs fixture_path", self.backend_id))
                })?;
                BackendHandle::new(ScriptedBackend::from_file(&self.backend_id, fixture)?)
            }
            BackendKind::Http => {
                let base_url = self.base_url.as_ref().ok_or_else(|| {
                    GatewayError::Config(format!("http backend `{}` needs base_url", self.backend_id))
                })?;
                let api_key = match &self.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::BackendUnavailable {
                        backend_id: self.backend_id.clone(),
                        attempts: 0,
                        reason: format!("credential variable {var} is not set"),
                    })?),
                    None => None,
                };
                let mut retry = RetryPolicy::default();
                if let Some(n) = self.max_attempts {
                    retry.max_attempts = n.max(1);
                }
                if let Some(ms) = self.initial_backoff_ms {
                    retry.initial_backoff = Duration::from_millis(ms);
                }
                BackendHandle::new(HttpBackend::new(&self.backend_id, base_url, api_key)?.with_retry(retry))
            }
        };
        let handle = handle.with_defaults(self.defaults());
        Ok(match cache {
            Some(c) => handle.with_cache(c),
            None => handle,
        })
    }
}
