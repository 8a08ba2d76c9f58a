//! Zero-shot binary classification with a dual-encoder backend.
//!
//! An image is embedded once, each caption of a [`PromptPair`] is embedded
//! once, and the caption with the larger dot product wins. Ties go to the
//! counter caption.

mod cache;
mod fixture;
mod preprocess;

use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::catalog::PromptPair;
use crate::parallel::{map_ordered, Execution};

pub use cache::EmbeddingCache;
pub use fixture::{FixtureBackend, PromptIndex, PromptMapping, FIXTURE_DIM};
pub use preprocess::{
    preprocess_image, preprocess_rgb, PixelTensor, CLIP_MEAN, CLIP_STD, INPUT_SIZE,
};

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("cannot decode image {image_ref}: {reason}")]
    Decode { image_ref: String, reason: String },
    #[error("no embedding for image {0}")]
    UnknownImage(String),
    #[error("backend cannot embed prompt {0:?}")]
    UnknownPrompt(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("empty image batch")]
    EmptyBatch,
    #[error("fixture format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("backend failure: {0}")]
    Backend(String),
}

/// Location of an RGB image: a filesystem path or URI.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(String);

impl ImageRef {
    pub fn new(s: impl Into<String>) -> Self {
        ImageRef(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_path(&self) -> &Path {
        Path::new(self.0.strip_prefix("file://").unwrap_or(&self.0))
    }

    /// Last path component, used as the image id by annotation-driven backends.
    pub fn file_name(&self) -> &str {
        self.0.rsplit(['/', '\\']).next().unwrap_or(&self.0)
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageRef {
    fn from(s: &str) -> Self {
        ImageRef(s.to_owned())
    }
}

impl From<String> for ImageRef {
    fn from(s: String) -> Self {
        ImageRef(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Self {
        Embedding(values)
    }

    /// Scale to unit L2 norm. The zero vector is returned unchanged.
    pub fn normalized(values: Vec<f32>) -> Self {
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Embedding(values);
        }
        Embedding(values.into_iter().map(|v| (f64::from(v) / norm) as f32).collect())
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Dot product accumulated in f64.
    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

/// Whether a backend may serve scoring calls from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Shared,
    Serialized,
}

/// An image encoder and a text encoder that share one embedding space.
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn embedding_dim(&self) -> usize;
    /// Multiplier applied to similarities before the softmax used for
    /// displayed confidence. Never affects the decision.
    fn logit_scale(&self) -> f64;
    fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError>;
    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Shared
    }
}

impl<B: EncoderBackend + ?Sized> EncoderBackend for std::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn embedding_dim(&self) -> usize {
        (**self).embedding_dim()
    }
    fn logit_scale(&self) -> f64 {
        (**self).logit_scale()
    }
    fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError> {
        (**self).embed_image(image)
    }
    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
        (**self).embed_text(text)
    }
    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

/// Runs every call of the wrapped backend under one lock.
pub struct Gated<B> {
    inner: Mutex<B>,
    name: String,
    dim: usize,
    logit_scale: f64,
}

impl<B: EncoderBackend> Gated<B> {
    pub fn new(backend: B) -> Self {
        Gated {
            name: backend.name().to_owned(),
            dim: backend.embedding_dim(),
            logit_scale: backend.logit_scale(),
            inner: Mutex::new(backend),
        }
    }

    fn with<T>(&self, f: impl FnOnce(&B) -> T) -> T {
        let guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        f(&guard)
    }
}

impl<B: EncoderBackend> EncoderBackend for Gated<B> {
    fn name(&self) -> &str {
        &self.name
    }
    fn embedding_dim(&self) -> usize {
        self.dim
    }
    fn logit_scale(&self) -> f64 {
        self.logit_scale
    }
    fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError> {
        self.with(|b| b.embed_image(image))
    }
    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
        self.with(|b| b.embed_text(text))
    }
    fn concurrency(&self) -> Concurrency {
        Concurrency::Serialized
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryPrediction {
    pub decision: Decision,
    pub score_target: f64,
    pub score_counter: f64,
    /// Softmax probability of the decided side, in [0.5, 1].
    pub confidence: f64,
}

/// Softmax over the two logit-scaled scores: `(p_target, p_counter)`.
pub fn softmax_pair(logit_scale: f64, score_target: f64, score_counter: f64) -> (f64, f64) {
    // logistic form of the two-way softmax; stable for large logits
    let p_target = 1.0 / (1.0 + (logit_scale * (score_counter - score_target)).exp());
    (p_target, 1.0 - p_target)
}

/// Decision rule: positive iff the target strictly outscores the counter.
pub fn decide(score_target: f64, score_counter: f64, logit_scale: f64) -> BinaryPrediction {
    let decision = if score_target > score_counter {
        Decision::Positive
    } else {
        Decision::Negative
    };
    let (p_target, p_counter) = softmax_pair(logit_scale, score_target, score_counter);
    let confidence = match decision {
        Decision::Positive => p_target,
        Decision::Negative => p_counter,
    };
    BinaryPrediction { decision, score_target, score_counter, confidence }
}

struct PairEmbeddings {
    target: Embedding,
    counter: Embedding,
}

fn embed_pair<B: EncoderBackend + ?Sized>(
    backend: &B,
    pair: &PromptPair,
) -> Result<PairEmbeddings, ClassifierError> {
    let target = backend.embed_text(pair.target())?;
    let counter = backend.embed_text(pair.counter())?;
    let dim = backend.embedding_dim();
    for e in [&target, &counter] {
        if e.dim() != dim {
            return Err(ClassifierError::Dimension { expected: dim, actual: e.dim() });
        }
    }
    Ok(PairEmbeddings { target, counter })
}

fn score_with<B: EncoderBackend + ?Sized>(
    backend: &B,
    image: &ImageRef,
    texts: &PairEmbeddings,
) -> Result<(f64, f64), ClassifierError> {
    let img = backend.embed_image(image)?;
    if img.dim() != texts.target.dim() {
        return Err(ClassifierError::Dimension { expected: texts.target.dim(), actual: img.dim() });
    }
    Ok((img.dot(&texts.target), img.dot(&texts.counter)))
}

/// Similarities of the image with the target and the counter caption.
pub fn score_pair<B: EncoderBackend + ?Sized>(
    backend: &B,
    image: &ImageRef,
    pair: &PromptPair,
) -> Result<(f64, f64), ClassifierError> {
    let texts = embed_pair(backend, pair)?;
    score_with(backend, image, &texts)
}

pub fn predict<B: EncoderBackend + ?Sized>(
    backend: &B,
    image: &ImageRef,
    pair: &PromptPair,
) -> Result<BinaryPrediction, ClassifierError> {
    let (st, sc) = score_pair(backend, image, pair)?;
    Ok(decide(st, sc, backend.logit_scale()))
}

/// Classify many images against one pair, embedding the captions once.
///
/// The outer error covers failures shared by the whole batch (empty input,
/// caption embedding); per-image failures are reported at their index.
pub fn predict_batch<B: EncoderBackend + ?Sized>(
    backend: &B,
    images: &[ImageRef],
    pair: &PromptPair,
) -> Result<Vec<Result<BinaryPrediction, ClassifierError>>, ClassifierError> {
    predict_batch_with(backend, images, pair, Execution::default())
}

pub fn predict_batch_with<B: EncoderBackend + ?Sized>(
    backend: &B,
    images: &[ImageRef],
    pair: &PromptPair,
    exec: Execution,
) -> Result<Vec<Result<BinaryPrediction, ClassifierError>>, ClassifierError> {
    if images.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    let texts = embed_pair(backend, pair)?;
    let exec = match backend.concurrency() {
        Concurrency::Shared => exec,
        Concurrency::Serialized => Execution::Sequential,
    };
    let scale = backend.logit_scale();
    Ok(map_ordered(exec, images, |image| {
        score_with(backend, image, &texts).map(|(st, sc)| decide(st, sc, scale))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{contrary_pair, neutral_pair};

    /// Two-dimensional toy backend: images and texts are looked up by name.
    struct Toy;

    impl EncoderBackend for Toy {
        fn name(&self) -> &str {
            "toy"
        }
        fn embedding_dim(&self) -> usize {
            2
        }
        fn logit_scale(&self) -> f64 {
            100.0
        }
        fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError> {
            match image.as_str() {
                "x" => Ok(Embedding::new(vec![1.0, 0.0])),
                "y" => Ok(Embedding::new(vec![0.0, 1.0])),
                "bad" => Err(ClassifierError::Decode {
                    image_ref: "bad".into(),
                    reason: "truncated".into(),
                }),
                other => Err(ClassifierError::UnknownImage(other.into())),
            }
        }
        fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
            Ok(match text {
                "along x" => Embedding::new(vec![1.0, 0.0]),
                "along y" => Embedding::new(vec![0.0, 1.0]),
                "wide" => Embedding::new(vec![1.0, 0.0, 0.0]),
                _ => Embedding::new(vec![0.0, 0.0]),
            })
        }
    }

    #[test]
    fn decision_rule_examples() {
        assert_eq!(decide(0.31, 0.29, 100.0).decision, Decision::Positive);
        let tie = decide(0.30, 0.30, 100.0);
        assert_eq!(tie.decision, Decision::Negative);
        assert_eq!(tie.confidence, 0.5);
        let p = decide(0.31, 0.29, 100.0);
        let q = decide(0.29, 0.31, 100.0);
        assert_eq!(q.decision, Decision::Negative);
        assert!((p.confidence - q.confidence).abs() < 1e-12);
        // exp(2) / (1 + exp(2))
        let expected = 2f64.exp() / (1.0 + 2f64.exp());
        assert!((p.confidence - expected).abs() < 1e-12);
    }

    #[test]
    fn confidence_is_stable_for_large_logits() {
        let p = decide(1.0, -1.0, 1e6);
        assert_eq!(p.confidence, 1.0);
        let n = decide(-1.0, 1.0, 1e6);
        assert_eq!(n.confidence, 1.0);
        assert!(p.confidence.is_finite() && n.confidence.is_finite());
    }

    #[test]
    fn scores_follow_dot_products() {
        let pair = contrary_pair("along x", "along y").unwrap();
        assert_eq!(score_pair(&Toy, &"x".into(), &pair).unwrap(), (1.0, 0.0));
        // orthogonal embeddings
        let orth = neutral_pair("along y").unwrap();
        assert_eq!(score_pair(&Toy, &"x".into(), &orth).unwrap(), (0.0, 0.0));
        assert_eq!(predict(&Toy, &"y".into(), &pair).unwrap().decision, Decision::Negative);
    }

    #[test]
    fn batch_reports_errors_per_index() {
        let pair = contrary_pair("along x", "along y").unwrap();
        let images: Vec<ImageRef> = ["x", "bad", "y", "missing"].map(ImageRef::from).to_vec();
        let out = predict_batch(&Toy, &images, &pair).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[0].as_ref().unwrap().decision, Decision::Positive);
        assert!(matches!(out[1], Err(ClassifierError::Decode { .. })));
        assert_eq!(out[2].as_ref().unwrap().decision, Decision::Negative);
        assert!(matches!(out[3], Err(ClassifierError::UnknownImage(_))));
    }

    #[test]
    fn batch_of_one_matches_predict() {
        let pair = contrary_pair("along x", "along y").unwrap();
        let img = ImageRef::from("x");
        let single = predict(&Toy, &img, &pair).unwrap();
        let batch = predict_batch(&Toy, std::slice::from_ref(&img), &pair).unwrap();
        assert_eq!(batch[0].as_ref().unwrap(), &single);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let pair = contrary_pair("along x", "along y").unwrap();
        assert_eq!(predict_batch(&Toy, &[], &pair).unwrap_err(), ClassifierError::EmptyBatch);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let pair = neutral_pair("wide").unwrap();
        assert!(matches!(
            predict_batch(&Toy, &["x".into()], &pair),
            Err(ClassifierError::Dimension { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn gated_backend_forces_sequential_and_agrees() {
        let gated = Gated::new(Toy);
        assert_eq!(gated.concurrency(), Concurrency::Serialized);
        let pair = contrary_pair("along x", "along y").unwrap();
        let images: Vec<ImageRef> = ["x", "y", "x"].map(ImageRef::from).to_vec();
        let a = predict_batch(&gated, &images, &pair).unwrap();
        let b = predict_batch(&Toy, &images, &pair).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normalization() {
        let e = Embedding::normalized(vec![3.0, 4.0]);
        assert!((e.norm() - 1.0).abs() < 1e-7);
        assert_eq!(Embedding::normalized(vec![0.0; 3]).values(), &[0.0; 3]);
    }

    #[test]
    fn image_ref_file_name() {
        assert_eq!(ImageRef::from("/data/img/000001.jpg").file_name(), "000001.jpg");
        assert_eq!(ImageRef::from("000002.jpg").file_name(), "000002.jpg");
        assert_eq!(ImageRef::from("file:///a/b.png").as_path(), Path::new("/a/b.png"));
    }
}
