use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use guesswho_clip::{OnnxClipBackend, OnnxClipConfig};
use guesswho_core::benchmark::parse_attr_file;
use guesswho_core::classifier::{EmbeddingCache, FixtureBackend, PromptIndex};
use guesswho_core::{Catalog, EncoderBackend, ImageRef};

use crate::config::{BackendConfig, ServiceConfig};
use crate::store::SessionStore;

pub type SharedBackend = Arc<dyn EncoderBackend>;

#[derive(thiserror::Error, Debug)]
pub enum StartupError {
    #[error("{0}")]
    Config(String),
    #[error("loading backend: {0}")]
    Backend(String),
    #[error("scanning {path}: {message}")]
    Images { path: PathBuf, message: String },
}

/// Everything the handlers share.
pub struct AppState {
    pub store: SessionStore,
    pub backend: EmbeddingCache<SharedBackend>,
    pub catalog: Catalog,
    /// Images boards are dealt from.
    pub pool: Vec<ImageRef>,
    pub board_size: usize,
    pub initial_score: u32,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Image files directly under `dir`, sorted by name.
pub fn scan_images(dir: &Path) -> Result<Vec<ImageRef>, StartupError> {
    let err = |message: String| StartupError::Images { path: dir.to_owned(), message };
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| err(e.to_string()))? {
        let path = entry.map_err(|e| err(e.to_string()))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            found.push(ImageRef::new(path.to_string_lossy().into_owned()));
        }
    }
    found.sort();
    Ok(found)
}

impl AppState {
    pub fn new(
        backend: SharedBackend,
        catalog: Catalog,
        pool: Vec<ImageRef>,
        board_size: usize,
        initial_score: u32,
        ttl: Duration,
    ) -> Result<Self, StartupError> {
        if pool.len() < 2 {
            return Err(StartupError::Config(format!("need at least 2 images, found {}", pool.len())));
        }
        let board_size = if board_size > pool.len() {
            tracing::warn!(board_size, available = pool.len(), "board size capped by available images");
            pool.len()
        } else {
            board_size
        };
        Ok(AppState {
            store: SessionStore::new(ttl),
            backend: EmbeddingCache::new(backend),
            catalog,
            pool,
            board_size,
            initial_score,
        })
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, StartupError> {
        let catalog = match &config.catalog {
            Some(path) => Catalog::load(path).map_err(|e| StartupError::Config(e.to_string()))?,
            None => Catalog::shipped(),
        };
        let mut pool = scan_images(&config.image_directory)?;
        let backend: SharedBackend = match &config.backend {
            BackendConfig::Fixture { attributes } => {
                let file = std::fs::File::open(attributes)
                    .map_err(|e| StartupError::Backend(format!("{}: {e}", attributes.display())))?;
                let table = parse_attr_file(std::io::BufReader::new(file))
                    .map_err(|e| StartupError::Backend(e.to_string()))?;
                let prompts = PromptIndex::from_catalogs(&[&catalog, &Catalog::shipped_neutral()])
                    .map_err(|e| StartupError::Backend(e.to_string()))?;
                let fixture = FixtureBackend::from_table(&table, prompts)
                    .map_err(|e| StartupError::Backend(e.to_string()))?;
                // only annotated images can be answered for
                pool.retain(|r| fixture.bits(r.file_name()).is_some());
                Arc::new(fixture)
            }
            BackendConfig::Model { image_model, text_model, logit_scale } => {
                let mut onnx = OnnxClipConfig::new(image_model, text_model);
                onnx.logit_scale = *logit_scale;
                Arc::new(OnnxClipBackend::load(&onnx).map_err(|e| StartupError::Backend(e.to_string()))?)
            }
        };
        tracing::info!(backend = backend.name(), images = pool.len(), "service state ready");
        AppState::new(backend, catalog, pool, config.board_size, config.initial_score, config.session_ttl())
    }
}
