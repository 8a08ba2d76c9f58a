//! CLIP text and image encoders.

mod onnx;
mod tokenizer;

pub use onnx::{OnnxClipBackend, OnnxClipConfig, DEFAULT_LOGIT_SCALE};
pub use tokenizer::{ClipTokenizer, TokenizedText, TokenizerError, CONTEXT_LENGTH, END_OF_TEXT, START_OF_TEXT};
