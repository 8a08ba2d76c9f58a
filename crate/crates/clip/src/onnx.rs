//! CLIP encoders exported to ONNX, run on CPU with tract.
//!
//! The image model takes one `f32 [1, 3, 224, 224]` tensor. The text model
//! takes `i64 [1, 77]` token ids, plus an attention mask of the same shape if
//! it declares a second input. The first output of each model, flattened, is
//! the embedding.

use std::path::{Path, PathBuf};

use tract_onnx::prelude::*;

use guesswho_core::classifier::{
    preprocess_image, ClassifierError, Embedding, EncoderBackend, ImageRef, INPUT_SIZE,
};

use crate::tokenizer::{ClipTokenizer, CONTEXT_LENGTH};

/// Temperature of the pretrained ViT-B/32 checkpoint, exp(4.6052).
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

type Plan = TypedRunnableModel<TypedModel>;

#[derive(Debug, Clone, PartialEq)]
pub struct OnnxClipConfig {
    pub image_model: PathBuf,
    pub text_model: PathBuf,
    pub logit_scale: f64,
}

impl OnnxClipConfig {
    pub fn new(image_model: impl Into<PathBuf>, text_model: impl Into<PathBuf>) -> Self {
        OnnxClipConfig {
            image_model: image_model.into(),
            text_model: text_model.into(),
            logit_scale: DEFAULT_LOGIT_SCALE,
        }
    }
}

pub struct OnnxClipBackend {
    image: Plan,
    text: Plan,
    text_takes_mask: bool,
    dim: usize,
    logit_scale: f64,
    tokenizer: &'static ClipTokenizer,
    name: String,
}

impl std::fmt::Debug for OnnxClipBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxClipBackend")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("text_takes_mask", &self.text_takes_mask)
            .finish()
    }
}

fn backend_err(context: &str, path: &Path, e: impl std::fmt::Display) -> ClassifierError {
    ClassifierError::Backend(format!("{context} {}: {e}", path.display()))
}

fn load_plan(path: &Path, facts: Vec<InferenceFact>) -> Result<(Plan, usize), ClassifierError> {
    let mut model = tract_onnx::onnx()
        .model_for_path(path)
        .map_err(|e| backend_err("loading", path, e))?;
    let inputs = model.inputs.len();
    if inputs == 0 || inputs > facts.len() {
        return Err(backend_err("loading", path, format!("unsupported input count {inputs}")));
    }
    for (i, fact) in facts.into_iter().take(inputs).enumerate() {
        model = model.with_input_fact(i, fact).map_err(|e| backend_err("typing", path, e))?;
    }
    let plan = model
        .into_optimized()
        .and_then(|m| m.into_runnable())
        .map_err(|e| backend_err("optimizing", path, e))?;
    Ok((plan, inputs))
}

fn first_output(outputs: TVec<TValue>, what: &str) -> Result<Vec<f32>, ClassifierError> {
    let out = outputs
        .first()
        .ok_or_else(|| ClassifierError::Backend(format!("{what} model produced no output")))?;
    let view = out
        .to_array_view::<f32>()
        .map_err(|e| ClassifierError::Backend(format!("{what} output: {e}")))?;
    Ok(view.iter().copied().collect())
}

impl OnnxClipBackend {
    /// Load both encoders and probe the text encoder once to learn the
    /// embedding width.
    pub fn load(config: &OnnxClipConfig) -> Result<Self, ClassifierError> {
        let side = INPUT_SIZE as usize;
        let image_fact = InferenceFact::dt_shape(f32::datum_type(), tvec![1, 3, side, side]);
        let ids_fact = InferenceFact::dt_shape(i64::datum_type(), tvec![1, CONTEXT_LENGTH]);
        let (image, _) = load_plan(&config.image_model, vec![image_fact])?;
        let (text, text_inputs) = load_plan(&config.text_model, vec![ids_fact.clone(), ids_fact])?;
        let mut backend = OnnxClipBackend {
            image,
            text,
            text_takes_mask: text_inputs == 2,
            dim: 0,
            logit_scale: config.logit_scale,
            tokenizer: ClipTokenizer::shipped(),
            name: format!("onnx:{}", config.image_model.display()),
        };
        backend.dim = backend.run_text(guesswho_core::catalog::NEUTRAL_PROMPT)?.len();
        if backend.dim == 0 {
            return Err(backend_err("probing", &config.text_model, "empty embedding"));
        }
        Ok(backend)
    }

    fn run_text(&self, text: &str) -> Result<Vec<f32>, ClassifierError> {
        let tokens = self.tokenizer.tokenize(text);
        if tokens.truncated {
            tracing::warn!(prompt = text, "prompt exceeds {CONTEXT_LENGTH} tokens and was truncated");
        }
        let as_tensor = |v: &[i64]| {
            Tensor::from_shape(&[1, CONTEXT_LENGTH], v)
                .map_err(|e| ClassifierError::Backend(format!("token tensor: {e}")))
        };
        let mut inputs: TVec<TValue> = tvec![as_tensor(&tokens.ids)?.into()];
        if self.text_takes_mask {
            inputs.push(as_tensor(&tokens.attention_mask())?.into());
        }
        let outputs = self
            .text
            .run(inputs)
            .map_err(|e| ClassifierError::Backend(format!("text encoder: {e}")))?;
        first_output(outputs, "text")
    }

    fn checked(&self, values: Vec<f32>) -> Result<Embedding, ClassifierError> {
        if values.len() != self.dim {
            return Err(ClassifierError::Dimension { expected: self.dim, actual: values.len() });
        }
        Ok(Embedding::normalized(values))
    }
}

impl EncoderBackend for OnnxClipBackend {
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
        let pixels = preprocess_image(image)?;
        let input = Tensor::from_shape(&[1, 3, pixels.height, pixels.width], &pixels.data)
            .map_err(|e| ClassifierError::Backend(format!("pixel tensor: {e}")))?;
        let outputs = self
            .image
            .run(tvec![input.into()])
            .map_err(|e| ClassifierError::Backend(format!("image encoder: {e}")))?;
        self.checked(first_output(outputs, "image")?)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
        self.checked(self.run_text(text)?)
    }
}
