//! Prompt-method evaluation on labeled face attributes.
//!
//! For every attribute the first `cap` positive and first `cap` negative
//! images (annotation-file order) are classified with a prompt pair, and the
//! true positive rate, true negative rate and their mean are reported.

mod attrs;
mod eval;
mod report;

use std::fmt;
use std::path::Path;

use crate::catalog::{Catalog, Method};
use crate::classifier::{ClassifierError, EncoderBackend};
use crate::parallel::Execution;

pub use attrs::{parse_attr_file, select_eval_subset, AttributeRow, AttributeTable, EvalSubset};
pub use eval::{
    compare_methods, evaluate_prompt_pair, evaluate_prompt_pair_with, round2, AttributeAccuracy,
    ComparisonRow, Confusion, EvalResult,
};
pub use report::{comparison_rows, emit_report, parse_report, ReportFormat, ReportRow};

/// Cap used by the reference evaluation: 4000 positives and 4000 negatives.
pub const DEFAULT_CAP: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Positive => "positive",
            Side::Negative => "negative",
        })
    }
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum BenchError {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("no {side} images for attribute {attribute:?}")]
    InsufficientData { attribute: String, side: Side },
    #[error("attribute {0:?} is missing from one of the compared result sets")]
    Pairing(String),
    #[error("classifying {image}: {source}")]
    Image { image: String, source: ClassifierError },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Evaluate every catalog entry of the given method (all entries when
/// `method` is `None`) against the annotation table.
///
/// `image_root` is joined to each annotated filename.
pub fn evaluate_catalog<B: EncoderBackend + ?Sized>(
    backend: &B,
    table: &AttributeTable,
    image_root: &Path,
    catalog: &Catalog,
    method: Option<Method>,
    cap: usize,
    exec: Execution,
) -> Result<Vec<EvalResult>, BenchError> {
    catalog
        .entries()
        .iter()
        .filter(|e| method.map_or(true, |m| e.pair.method() == m))
        .map(|e| {
            let subset = select_eval_subset(table, &e.attribute, cap)?.rooted(image_root);
            evaluate_prompt_pair_with(backend, &subset, &e.pair, exec)
        })
        .collect()
}
