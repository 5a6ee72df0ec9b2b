//! Backend-agnostic chat/vision model access.
//!
//! Requests are plain chat transcripts whose user turns may carry images.
//! A [`BackendHandle`] pairs a [`Backend`] with request defaults and an
//! optional content-addressed [`ResponseCache`].

mod cache;
mod config;
mod http;
mod scripted;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use config::{load_backend_configs, BackendConfig, BackendKind};
pub use http::{HttpBackend, RetryPolicy};
pub use scripted::{MatchRule, ScriptRule, ScriptedBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend `{backend_id}` unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable {
        backend_id: String,
        attempts: u32,
        reason: String,
    },
    #[error("scripted backend `{backend_id}` has no rule matching: {excerpt:?}")]
    FixtureMiss { backend_id: String, excerpt: String },
    #[error("backend `{0}` returned an empty reply")]
    MalformedReply(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("image {path}: {source}")]
    MissingImage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache i/o: {0}")]
    Cache(#[source] std::io::Error),
}

impl GatewayError {
    pub fn class_name(&self) -> &'static str {
        match self {
            GatewayError::BackendUnavailable { .. } => "BackendUnavailable",
            GatewayError::FixtureMiss { .. } => "FixtureMiss",
            GatewayError::MalformedReply(_) => "MalformedReply",
            GatewayError::InvalidRequest(_) => "InvalidRequest",
            GatewayError::Config(_) => "ConfigError",
            GatewayError::MissingImage { .. } => "MissingImage",
            GatewayError::Cache(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediaType {
    #[serde(rename = "image/png")]
    Png,
    #[serde(rename = "image/jpeg")]
    Jpeg,
    #[serde(rename = "image/webp")]
    Webp,
}

impl MediaType {
    pub fn as_mime(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
            MediaType::Webp => "image/webp",
        }
    }

    pub fn from_mime(mime: &str) -> Option<Self> {
        match mime {
            "image/png" => Some(MediaType::Png),
            "image/jpeg" => Some(MediaType::Jpeg),
            "image/webp" => Some(MediaType::Webp),
            _ => None,
        }
    }

    pub fn from_extension(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(MediaType::Png),
            "jpg" | "jpeg" => Some(MediaType::Jpeg),
            "webp" => Some(MediaType::Webp),
            _ => None,
        }
    }
}

/// SHA-256 of an image's bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageDigest([u8; 32]);

impl ImageDigest {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ImageDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageDigest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for ImageDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum ImageSource {
    Path(PathBuf),
    Inline(Arc<[u8]>),
}

impl fmt::Debug for ImageSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageSource::Path(p) => f.debug_tuple("Path").field(p).finish(),
            ImageSource::Inline(b) => write!(f, "Inline({} bytes)", b.len()),
        }
    }
}

/// An image attached to a user turn. The content digest is computed at
/// construction; cache keys use it in place of the bytes or path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    source: ImageSource,
    media_type: MediaType,
    digest: ImageDigest,
}

impl ImageRef {
    /// Reads the file once to fingerprint it; the media type comes from the extension.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let media_type = MediaType::from_extension(path).ok_or_else(|| {
            GatewayError::InvalidRequest(format!(
                "unsupported image type for {} (expected png, jpeg or webp)",
                path.display()
            ))
        })?;
        let bytes = std::fs::read(path).map_err(|source| GatewayError::MissingImage {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            source: ImageSource::Path(path.to_path_buf()),
            media_type,
            digest: ImageDigest::of(&bytes),
        })
    }

    pub fn inline(bytes: impl Into<Arc<[u8]>>, media_type: MediaType) -> Self {
        let bytes = bytes.into();
        let digest = ImageDigest::of(&bytes);
        Self {
            source: ImageSource::Inline(bytes),
            media_type,
            digest,
        }
    }

    pub fn source(&self) -> &ImageSource {
        &self.source
    }

    pub fn media_type(&self) -> MediaType {
        self.media_type
    }

    pub fn digest(&self) -> ImageDigest {
        self.digest
    }

    pub fn bytes(&self) -> Result<Arc<[u8]>, GatewayError> {
        match &self.source {
            ImageSource::Inline(b) => Ok(b.clone()),
            ImageSource::Path(p) => std::fs::read(p)
                .map(Arc::from)
                .map_err(|source| GatewayError::MissingImage {
                    path: p.clone(),
                    source,
                }),
        }
    }

    /// `data:` URL with the base64 payload, as sent on the wire.
    pub fn to_data_url(&self) -> Result<String, GatewayError> {
        let bytes = self.bytes()?;
        Ok(format!(
            "data:{};base64,{}",
            self.media_type.as_mime(),
            base64::engine::general_purpose::STANDARD.encode(bytes)
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub images: Vec<ImageRef>,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user_with_image(text: impl Into<String>, image: ImageRef) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images: vec![image],
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.role == Role::Assistant && !self.images.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "assistant messages cannot carry images".into(),
            ));
        }
        if self.text.is_empty() && self.images.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "message has neither text nor images".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed_hint: Option<u64>,
}

impl ModelRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        let first_turn = usize::from(self.messages[0].role == Role::System);
        for (i, msg) in self.messages.iter().enumerate() {
            msg.validate()?;
            let expected = if i < first_turn {
                Role::System
            } else if (i - first_turn) % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            if msg.role != expected {
                return Err(GatewayError::InvalidRequest(format!(
                    "message {i} has role {:?}, expected {:?}",
                    msg.role, expected
                )));
            }
        }
        Ok(())
    }

    /// Text of the final user turn, the subject of scripted matching.
    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub backend_id: String,
    pub cached: bool,
    pub latency_ms: u64,
}

/// SHA-256 over the canonical serialization of a backend id and request.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", self.to_hex())
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Serialize)]
struct CanonicalImage<'a> {
    media_type: &'a str,
    sha256: String,
}

#[derive(Serialize)]
struct CanonicalMessage<'a> {
    role: Role,
    text: &'a str,
    images: Vec<CanonicalImage<'a>>,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    backend_id: &'a str,
    model_id: &'a str,
    temperature: f64,
    max_tokens: u32,
    seed_hint: Option<u64>,
    messages: Vec<CanonicalMessage<'a>>,
}

pub fn cache_key(backend_id: &str, request: &ModelRequest) -> CacheKey {
    let canonical = CanonicalRequest {
        backend_id,
        model_id: &request.model_id,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        seed_hint: request.seed_hint,
        messages: request
            .messages
            .iter()
            .map(|m| CanonicalMessage {
                role: m.role,
                text: &m.text,
                images: m
                    .images
                    .iter()
                    .map(|img| CanonicalImage {
                        media_type: img.media_type.as_mime(),
                        sha256: img.digest.to_hex(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    CacheKey(Sha256::digest(&bytes).into())
}

/// A chat/vision model. Implementations return the raw reply text.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError>;
}

/// Defaults applied to requests built through a [`BackendHandle`].
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDefaults {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        Self {
            model_id: "scripted".into(),
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

/// A configured backend plus an optional response cache. Cheap to clone.
#[derive(Clone)]
pub struct BackendHandle {
    backend: Arc<dyn Backend>,
    cache: Option<Arc<ResponseCache>>,
    defaults: RequestDefaults,
}

impl fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendHandle")
            .field("backend", &self.backend.id())
            .field("cached", &self.cache.is_some())
            .field("defaults", &self.defaults)
            .finish()
    }
}

impl BackendHandle {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self {
            backend: Arc::new(backend),
            cache: None,
            defaults: RequestDefaults::default(),
        }
    }

    pub fn from_arc(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: None,
            defaults: RequestDefaults::default(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_defaults(mut self, defaults: RequestDefaults) -> Self {
        self.defaults = defaults;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn defaults(&self) -> &RequestDefaults {
        &self.defaults
    }

    /// A request over `messages` using this handle's defaults.
    pub fn request(&self, messages: Vec<Message>, seed_hint: Option<u64>) -> ModelRequest {
        ModelRequest {
            model_id: self.defaults.model_id.clone(),
            messages,
            temperature: self.defaults.temperature,
            max_tokens: self.defaults.max_tokens,
            seed_hint,
        }
    }

    pub fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        complete(self, request)
    }
}

/// Sends `request` through `backend`, consulting the cache first when one is set.
pub fn complete(backend: &BackendHandle, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
    request.validate()?;
    let started = Instant::now();
    let backend_id = backend.backend.id().to_string();
    let key = backend.cache.as_ref().map(|_| cache_key(&backend_id, request));

    if let (Some(cache), Some(key)) = (&backend.cache, key) {
        if let Some(text) = cache.get(&key)? {
            log::debug!("cache hit {} on {}", key, backend_id);
            return Ok(ModelResponse {
                text,
                backend_id,
                cached: true,
                latency_ms: elapsed_ms(started),
            });
        }
    }

    let text = backend.backend.complete(request)?;
    if text.trim().is_empty() {
        return Err(GatewayError::MalformedReply(backend_id));
    }
    if let (Some(cache), Some(key)) = (&backend.cache, key) {
        cache.put(&key, &backend_id, &text)?;
    }
    Ok(ModelResponse {
        text,
        backend_id,
        cached: false,
        latency_ms: elapsed_ms(started),
    })
}

fn elapsed_ms(started: Instant) -> u64 {
    u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX)
}
