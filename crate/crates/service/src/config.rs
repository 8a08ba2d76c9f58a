use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(thiserror::Error, Debug)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {name}: {message}")]
    Env { name: &'static str, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which encoder answers the questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Ground-truth annotations stand in for the model (CelebA attribute file).
    Fixture { attributes: PathBuf },
    /// CLIP encoders exported to ONNX.
    Model {
        image_model: PathBuf,
        text_model: PathBuf,
        #[serde(default = "default_logit_scale")]
        logit_scale: f64,
    },
}

fn default_logit_scale() -> f64 {
    guesswho_clip::DEFAULT_LOGIT_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub image_directory: PathBuf,
    pub backend: BackendConfig,
    #[serde(default = "default_board_size")]
    pub board_size: usize,
    #[serde(default = "default_initial_score")]
    pub initial_score: u32,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    /// Replaces the bundled question catalog.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Served at `/` when set.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
}

fn default_listen() -> SocketAddr {
    ([127, 0, 0, 1], 8080).into()
}

fn default_board_size() -> usize {
    24
}

fn default_initial_score() -> u32 {
    guesswho_core::engine::DEFAULT_INITIAL_SCORE
}

fn default_ttl() -> u64 {
    2 * 60 * 60
}

fn env_parse<T: std::str::FromStr>(
    name: &'static str,
    value: String,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Env { name, message: e.to_string() })
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Read a TOML file, then apply `GUESSWHO_*` environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut config: ServiceConfig = toml::from_str(&text)?;
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Override fields from variables such as `GUESSWHO_LISTEN`,
    /// `GUESSWHO_IMAGE_DIRECTORY`, `GUESSWHO_BOARD_SIZE`,
    /// `GUESSWHO_INITIAL_SCORE`, `GUESSWHO_SESSION_TTL_SECS` and
    /// `GUESSWHO_STATIC_DIR`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("GUESSWHO_LISTEN") {
            self.listen = env_parse("GUESSWHO_LISTEN", v)?;
        }
        if let Some(v) = var("GUESSWHO_IMAGE_DIRECTORY") {
            self.image_directory = v.into();
        }
        if let Some(v) = var("GUESSWHO_BOARD_SIZE") {
            self.board_size = env_parse("GUESSWHO_BOARD_SIZE", v)?;
        }
        if let Some(v) = var("GUESSWHO_INITIAL_SCORE") {
            self.initial_score = env_parse("GUESSWHO_INITIAL_SCORE", v)?;
        }
        if let Some(v) = var("GUESSWHO_SESSION_TTL_SECS") {
            self.session_ttl_secs = env_parse("GUESSWHO_SESSION_TTL_SECS", v)?;
        }
        if let Some(v) = var("GUESSWHO_STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.board_size < 2 {
            return Err(ConfigError::Invalid(format!("board_size must be at least 2, got {}", self.board_size)));
        }
        if let BackendConfig::Model { logit_scale, .. } = self.backend {
            if !(logit_scale.is_finite() && logit_scale > 0.0) {
                return Err(ConfigError::Invalid(format!("logit_scale must be positive, got {logit_scale}")));
            }
        }
        Ok(())
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
