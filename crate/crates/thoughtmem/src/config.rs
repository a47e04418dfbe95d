//! Service configuration from a TOML file, with remote backend settings
//! overridable through environment variables.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store_path = "memory.jsonl"
//!
//! [pipeline]
//! k = 8
//! epsilon = 0.85
//!
//! [lm]
//! backend = "scripted"
//! script = "script.json"
//!
//! [embedder]
//! backend = "hashed"
//! dimension = 256
//! ```

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;
use thoughtmem_core::embedding::DEFAULT_DIMENSION;
use thoughtmem_core::{Embedder, HashedBowEmbedder, LanguageModel, PipelineConfig, ScriptedModel};

use crate::remote::{
    RemoteConfigError, RemoteEmbedder, RemoteModel, RemoteSettings, ENV_EMBED_DIM, ENV_EMBED_MODEL, ENV_EMBED_URL,
    ENV_LLM_KEY, ENV_LLM_MODEL, ENV_LLM_TEMPERATURE, ENV_LLM_URL,
};

pub type SharedModel = Arc<dyn LanguageModel + Send + Sync>;
pub type SharedEmbedder = Arc<dyn Embedder + Send + Sync>;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration in {path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error(transparent)]
    Remote(#[from] RemoteConfigError),
    #[error(transparent)]
    Pipeline(#[from] thoughtmem_core::pipeline::ConfigError),
    #[error("store directory {0} is not writable")]
    StoreNotWritable(String),
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEndpoint {
    pub url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub temperature: Option<f64>,
    /// First retry delay in milliseconds.
    pub retry_base_ms: Option<u64>,
    pub timeout_secs: Option<u64>,
    /// Vector length; embedder endpoints only.
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum LmBackend {
    Scripted { script: PathBuf },
    Remote(RemoteEndpoint),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderBackend {
    Hashed {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(RemoteEndpoint),
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbedderBackend {
    fn default() -> Self {
        EmbedderBackend::Hashed {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub store_path: PathBuf,
    /// Defaults to the store path with `.audit.jsonl` appended.
    #[serde(default)]
    pub audit_path: Option<PathBuf>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub lm: Option<LmBackend>,
    #[serde(default)]
    pub embedder: EmbedderBackend,
}

impl ServiceConfig {
    pub fn new(store_path: impl Into<PathBuf>) -> Self {
        Self {
            listen: default_listen(),
            store_path: store_path.into(),
            audit_path: None,
            pipeline: PipelineConfig::default(),
            lm: None,
            embedder: EmbedderBackend::default(),
        }
    }

    pub fn parse(path_label: &str, text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid {
            path: path_label.to_string(),
            reason: e.to_string(),
        })?;
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&path.display().to_string(), &text)?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.store_path = base.join(&cfg.store_path);
        if let Some(a) = &cfg.audit_path {
            cfg.audit_path = Some(base.join(a));
        }
        if let Some(LmBackend::Scripted { script }) = &mut cfg.lm {
            *script = base.join(&*script);
        }
        Ok(cfg)
    }

    pub fn audit_path(&self) -> PathBuf {
        self.audit_path.clone().unwrap_or_else(|| {
            let mut p = self.store_path.clone().into_os_string();
            p.push(".audit.jsonl");
            PathBuf::from(p)
        })
    }

    /// Fails unless a file can be created next to the store.
    pub fn check_store_writable(&self) -> Result<(), ConfigError> {
        let dir = match self.store_path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        tempfile::NamedTempFile::new_in(&dir)
            .map(drop)
            .map_err(|_| ConfigError::StoreNotWritable(dir.display().to_string()))
    }

    pub fn embedder_dimension(&self) -> Result<usize, ConfigError> {
        match &self.embedder {
            EmbedderBackend::Hashed { dimension } => Ok(*dimension),
            EmbedderBackend::Remote(RemoteEndpoint { dimension: Some(d), .. }) => Ok(*d),
            EmbedderBackend::Remote(_) => {
                let raw = env_or(ENV_EMBED_DIM).ok_or(RemoteConfigError::MissingVar(ENV_EMBED_DIM))?;
                raw.parse().map_err(|_| {
                    RemoteConfigError::InvalidVar {
                        name: ENV_EMBED_DIM,
                        value: raw.clone(),
                    }
                    .into()
                })
            }
        }
    }

    pub fn build_embedder(&self) -> Result<SharedEmbedder, ConfigError> {
        match &self.embedder {
            EmbedderBackend::Hashed { dimension } => Ok(Arc::new(HashedBowEmbedder::new(*dimension).map_err(|e| {
                ConfigError::Invalid {
                    path: "embedder".into(),
                    reason: e.to_string(),
                }
            })?)),
            EmbedderBackend::Remote(endpoint) => {
                let settings = endpoint_settings(endpoint, ENV_EMBED_URL, ENV_EMBED_MODEL, None)?;
                Ok(Arc::new(RemoteEmbedder::new(settings, self.embedder_dimension()?)?))
            }
        }
    }

    /// The configured language model. `None` when the file names no backend.
    pub fn build_model(&self) -> Result<Option<SharedModel>, ConfigError> {
        match &self.lm {
            None => Ok(None),
            Some(LmBackend::Scripted { script }) => Ok(Some(Arc::new(load_script(script)?))),
            Some(LmBackend::Remote(endpoint)) => {
                let settings = endpoint_settings(endpoint, ENV_LLM_URL, ENV_LLM_MODEL, Some(ENV_LLM_TEMPERATURE))?;
                Ok(Some(Arc::new(RemoteModel::new(settings)?)))
            }
        }
    }
}

fn env_or(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

/// File settings with environment variables taking precedence.
fn endpoint_settings(
    e: &RemoteEndpoint,
    url_var: &'static str,
    model_var: &'static str,
    temperature_var: Option<&'static str>,
) -> Result<RemoteSettings, ConfigError> {
    let url = env_or(url_var)
        .or_else(|| e.url.clone())
        .ok_or(RemoteConfigError::MissingVar(url_var))?;
    let model = env_or(model_var)
        .or_else(|| e.model.clone())
        .ok_or(RemoteConfigError::MissingVar(model_var))?;
    let mut s = RemoteSettings::new(url, model);
    s.api_key = env_or(ENV_LLM_KEY).or_else(|| e.api_key.clone());
    s.temperature = e.temperature.unwrap_or(0.0);
    if let Some(var) = temperature_var {
        if let Some(t) = env_or(var) {
            s.temperature = t.parse().map_err(|_| RemoteConfigError::InvalidVar {
                name: var,
                value: t.clone(),
            })?;
        }
    }
    if let Some(ms) = e.retry_base_ms {
        s.retry.base_delay = Duration::from_millis(ms);
    }
    if let Some(secs) = e.timeout_secs {
        s.timeout = Duration::from_secs(secs);
    }
    Ok(s)
}

/// Reads a scripted model fixture (JSON).
pub fn load_script(path: &Path) -> Result<ScriptedModel, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
