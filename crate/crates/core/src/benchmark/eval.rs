use serde::{Deserialize, Serialize};

use crate::catalog::{normalize_label, PromptPair};
use crate::classifier::{predict_batch_with, Decision, EncoderBackend, ImageRef};
use crate::parallel::Execution;

use super::{BenchError, EvalSubset, Side};

/// Round to two decimals, halves away from −∞.
pub fn round2(x: f64) -> f64 {
    // the epsilon absorbs representation error on exact halves (e.g. 1.005)
    ((x * 100.0) + 0.5 + 1e-7).floor() / 100.0
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl Confusion {
    /// Tally predictions over the positive half and the negative half.
    pub fn tally(
        positives: impl IntoIterator<Item = Decision>,
        negatives: impl IntoIterator<Item = Decision>,
    ) -> Confusion {
        let mut c = Confusion::default();
        for d in positives {
            match d {
                Decision::Positive => c.tp += 1,
                Decision::Negative => c.fn_ += 1,
            }
        }
        for d in negatives {
            match d {
                Decision::Negative => c.tn += 1,
                Decision::Positive => c.fp += 1,
            }
        }
        c
    }

    /// True positive rate in percent, unrounded. `None` without positives.
    pub fn tpr(&self) -> Option<f64> {
        let n = self.tp + self.fn_;
        (n > 0).then(|| 100.0 * self.tp as f64 / n as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        let n = self.tn + self.fp;
        (n > 0).then(|| 100.0 * self.tn as f64 / n as f64)
    }
}

/// Rates of one prompt pair on one attribute, in percent with two decimals.
/// Accuracy is the mean of TPR and TNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub attribute: String,
    pub pair: PromptPair,
    pub counts: Confusion,
    pub tpr: f64,
    pub tnr: f64,
    pub acc: f64,
}

impl EvalResult {
    pub fn from_counts(attribute: &str, pair: PromptPair, counts: Confusion) -> Result<Self, BenchError> {
        let insufficient = |side| BenchError::InsufficientData { attribute: attribute.to_owned(), side };
        let tpr = round2(counts.tpr().ok_or_else(|| insufficient(Side::Positive))?);
        let tnr = round2(counts.tnr().ok_or_else(|| insufficient(Side::Negative))?);
        Ok(EvalResult {
            attribute: normalize_label(attribute),
            pair,
            counts,
            tpr,
            tnr,
            acc: round2((tpr + tnr) / 2.0),
        })
    }
}

pub fn evaluate_prompt_pair<B: EncoderBackend + ?Sized>(
    backend: &B,
    subset: &EvalSubset,
    pair: &PromptPair,
) -> Result<EvalResult, BenchError> {
    evaluate_prompt_pair_with(backend, subset, pair, Execution::default())
}

/// Classify both halves of the subset with one batch call and tally the
/// confusion counts. Counts are integers, so the result does not depend on
/// how the batch was scheduled.
pub fn evaluate_prompt_pair_with<B: EncoderBackend + ?Sized>(
    backend: &B,
    subset: &EvalSubset,
    pair: &PromptPair,
    exec: Execution,
) -> Result<EvalResult, BenchError> {
    for (half, side) in [(&subset.positives, Side::Positive), (&subset.negatives, Side::Negative)] {
        if half.is_empty() {
            return Err(BenchError::InsufficientData { attribute: subset.attribute.clone(), side });
        }
    }
    let images: Vec<ImageRef> =
        subset.positives.iter().chain(&subset.negatives).cloned().collect();
    let predictions = predict_batch_with(backend, &images, pair, exec)?;
    let mut decisions = Vec::with_capacity(predictions.len());
    for (image, p) in images.iter().zip(predictions) {
        let p = p.map_err(|source| BenchError::Image { image: image.to_string(), source })?;
        decisions.push(p.decision);
    }
    let (pos, neg) = decisions.split_at(subset.positives.len());
    let counts = Confusion::tally(pos.iter().copied(), neg.iter().copied());
    EvalResult::from_counts(&subset.attribute, pair.clone(), counts)
}

/// Anything that carries an accuracy for an attribute.
pub trait AttributeAccuracy {
    fn attribute(&self) -> &str;
    fn accuracy(&self) -> f64;
}

impl AttributeAccuracy for EvalResult {
    fn attribute(&self) -> &str {
        &self.attribute
    }
    fn accuracy(&self) -> f64 {
        self.acc
    }
}

impl AttributeAccuracy for (&str, f64) {
    fn attribute(&self) -> &str {
        self.0
    }
    fn accuracy(&self) -> f64 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub attribute: String,
    pub neutral_acc: f64,
    pub contrary_acc: f64,
    /// Contrary accuracy minus neutral accuracy, in percentage points.
    pub gain: f64,
}

/// Pair neutral and contrary accuracies by attribute, in contrary order.
pub fn compare_methods<N: AttributeAccuracy, C: AttributeAccuracy>(
    neutral: &[N],
    contrary: &[C],
) -> Result<Vec<ComparisonRow>, BenchError> {
    let find_neutral = |name: &str| {
        let key = normalize_label(name);
        neutral.iter().find(|n| normalize_label(n.attribute()) == key)
    };
    for n in neutral {
        let key = normalize_label(n.attribute());
        if !contrary.iter().any(|c| normalize_label(c.attribute()) == key) {
            return Err(BenchError::Pairing(n.attribute().to_owned()));
        }
    }
    contrary
        .iter()
        .map(|c| {
            let n = find_neutral(c.attribute())
                .ok_or_else(|| BenchError::Pairing(c.attribute().to_owned()))?;
            Ok(ComparisonRow {
                attribute: normalize_label(c.attribute()),
                neutral_acc: n.accuracy(),
                contrary_acc: c.accuracy(),
                gain: round2(c.accuracy() - n.accuracy()),
            })
        })
        .collect()
}
