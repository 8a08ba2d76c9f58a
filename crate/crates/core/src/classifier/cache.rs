use std::collections::HashMap;
use std::sync::RwLock;

use super::{ClassifierError, Concurrency, Embedding, EncoderBackend, ImageRef};

/// Memoizes image and caption embeddings of an inner backend.
///
/// Board images are classified once per turn and benchmark images once per
/// attribute; with a real encoder the image forward pass dominates, so each
/// image is embedded at most once. Errors are not cached.
pub struct EmbeddingCache<B> {
    inner: B,
    images: RwLock<HashMap<ImageRef, Embedding>>,
    texts: RwLock<HashMap<String, Embedding>>,
}

impl<B: EncoderBackend> EmbeddingCache<B> {
    pub fn new(inner: B) -> Self {
        EmbeddingCache { inner, images: RwLock::default(), texts: RwLock::default() }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cached_images(&self) -> usize {
        self.images.read().map(|m| m.len()).unwrap_or(0)
    }
}

fn cached<K, Q>(
    map: &RwLock<HashMap<K, Embedding>>,
    key: &Q,
    compute: impl FnOnce() -> Result<Embedding, ClassifierError>,
) -> Result<Embedding, ClassifierError>
where
    K: std::hash::Hash + Eq + std::borrow::Borrow<Q>,
    Q: std::hash::Hash + Eq + ToOwned<Owned = K> + ?Sized,
{
    if let Some(e) = map.read().unwrap_or_else(|p| p.into_inner()).get(key) {
        return Ok(e.clone());
    }
    let e = compute()?;
    map.write()
        .unwrap_or_else(|p| p.into_inner())
        .entry(key.to_owned())
        .or_insert_with(|| e.clone());
    Ok(e)
}

impl<B: EncoderBackend> EncoderBackend for EmbeddingCache<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }
    fn logit_scale(&self) -> f64 {
        self.inner.logit_scale()
    }
    fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError> {
        cached(&self.images, image, || self.inner.embed_image(image))
    }
    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
        cached(&self.texts, text, || self.inner.embed_text(text))
    }
    fn concurrency(&self) -> Concurrency {
        self.inner.concurrency()
    }
}
