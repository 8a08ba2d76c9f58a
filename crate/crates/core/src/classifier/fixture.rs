//! Deterministic stand-in encoder built from ground-truth attribute bits.
//!
//! Embeddings live in 41 dimensions. An image with attribute vector
//! `b ∈ {±1}^40` embeds as `b / √40` (last coordinate 0). A caption mapped to
//! attribute `i` with polarity `p` embeds as `p·eᵢ`, and the neutral caption
//! embeds as the zero vector. Scoring image against caption therefore yields
//! `p·bᵢ/√40`, so target-vs-neutral questions answer exactly with the
//! annotated bit.

use std::collections::HashMap;
use std::io::Read;

use crate::benchmark::AttributeTable;
use crate::catalog::{normalize_label, Catalog, Method, ATTRIBUTE_COUNT, CELEBA_LABELS};

use super::{ClassifierError, Embedding, EncoderBackend, ImageRef};

pub const FIXTURE_DIM: usize = ATTRIBUTE_COUNT + 1;

/// Header of a prompt-index file.
pub const PROMPT_INDEX_HEADER: [&str; 3] = ["prompt", "attribute", "polarity"];

/// What a caption means to the fixture backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMapping {
    Neutral,
    /// Zero-based attribute index in CelebA order and a ±1 polarity.
    Attribute { index: usize, polarity: i8 },
}

/// Caption → attribute map.
///
/// File form: CSV with header `prompt,attribute,polarity`; `attribute` is the
/// one-based CelebA column (matching `bit1..bit40`) or `0` for the neutral
/// caption, whose polarity must also be `0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptIndex {
    map: HashMap<String, PromptMapping>,
}

impl PromptIndex {
    pub fn insert(&mut self, prompt: &str, mapping: PromptMapping) -> Result<(), ClassifierError> {
        let key = prompt.trim().to_owned();
        match self.map.get(&key) {
            Some(existing) if *existing != mapping => Err(ClassifierError::Format {
                line: 0,
                message: format!("prompt {key:?} mapped to {existing:?} and {mapping:?}"),
            }),
            _ => {
                self.map.insert(key, mapping);
                Ok(())
            }
        }
    }

    pub fn get(&self, prompt: &str) -> Option<PromptMapping> {
        self.map.get(prompt.trim()).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Map every caption of the given catalogs: targets to `+eᵢ`, contrary
    /// counters to `−eᵢ`, neutral counters to zero. A caption that is the
    /// target of one attribute and the counter of another (e.g. "wavy hair"
    /// against "straight hair") keeps its target mapping.
    pub fn from_catalogs(catalogs: &[&Catalog]) -> Result<Self, ClassifierError> {
        let mut index = PromptIndex::default();
        let mut counters = Vec::new();
        for catalog in catalogs {
            for entry in catalog.entries() {
                let i = celeba_index(&entry.attribute).ok_or_else(|| ClassifierError::Format {
                    line: 0,
                    message: format!("{:?} is not a CelebA attribute", entry.attribute),
                })?;
                index.insert(entry.pair.target(), PromptMapping::Attribute { index: i, polarity: 1 })?;
                let counter = match entry.pair.method() {
                    Method::Neutral => PromptMapping::Neutral,
                    Method::Contrary => PromptMapping::Attribute { index: i, polarity: -1 },
                };
                counters.push((entry.pair.counter(), counter));
            }
        }
        let targets = index.clone();
        for (text, mapping) in counters {
            if targets.get(text).is_none() {
                index.insert(text, mapping)?;
            }
        }
        Ok(index)
    }

    /// Index covering the shipped game catalog and neutral benchmark prompts.
    pub fn shipped() -> Self {
        PromptIndex::from_catalogs(&[&Catalog::shipped(), &Catalog::shipped_neutral()])
            .expect("shipped catalogs map consistently")
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ClassifierError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let fmt = |line: usize, message: String| ClassifierError::Format { line, message };
        let header = rdr.headers().map_err(|e| fmt(1, e.to_string()))?;
        if header.iter().ne(PROMPT_INDEX_HEADER) {
            return Err(fmt(1, format!("expected header {}", PROMPT_INDEX_HEADER.join(","))));
        }
        let mut index = PromptIndex::default();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| fmt(line, e.to_string()))?;
            if record.len() != 3 {
                return Err(fmt(line, format!("expected 3 fields, found {}", record.len())));
            }
            let attribute: usize =
                record[1].trim().parse().map_err(|_| fmt(line, "bad attribute column".into()))?;
            let polarity: i8 =
                record[2].trim().parse().map_err(|_| fmt(line, "bad polarity".into()))?;
            let mapping = match (attribute, polarity) {
                (0, 0) => PromptMapping::Neutral,
                (1..=ATTRIBUTE_COUNT, 1 | -1) => {
                    PromptMapping::Attribute { index: attribute - 1, polarity }
                }
                _ => return Err(fmt(line, format!("invalid mapping ({attribute}, {polarity})"))),
            };
            index.insert(&record[0], mapping).map_err(|e| fmt(line, e.to_string()))?;
        }
        Ok(index)
    }
}

fn celeba_index(name: &str) -> Option<usize> {
    let key = normalize_label(name);
    CELEBA_LABELS.iter().position(|l| normalize_label(l) == key)
}

/// Fixture encoder over annotated images, keyed by file name.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    bits: HashMap<String, [i8; ATTRIBUTE_COUNT]>,
    prompts: PromptIndex,
    logit_scale: f64,
}

impl FixtureBackend {
    pub fn new(
        bits: impl IntoIterator<Item = (String, [i8; ATTRIBUTE_COUNT])>,
        prompts: PromptIndex,
    ) -> Self {
        FixtureBackend { bits: bits.into_iter().collect(), prompts, logit_scale: 100.0 }
    }

    pub fn with_logit_scale(mut self, scale: f64) -> Self {
        self.logit_scale = scale;
        self
    }

    /// Build from an annotation table, reordering columns into CelebA order.
    pub fn from_table(table: &AttributeTable, prompts: PromptIndex) -> Result<Self, ClassifierError> {
        let mut column_of = [0usize; ATTRIBUTE_COUNT];
        for (i, label) in CELEBA_LABELS.iter().enumerate() {
            column_of[i] = table.column(label).ok_or_else(|| ClassifierError::Format {
                line: 2,
                message: format!("annotation table lacks attribute {label}"),
            })?;
        }
        let bits = table.rows().iter().map(|row| {
            let mut b = [0i8; ATTRIBUTE_COUNT];
            for (dst, &col) in b.iter_mut().zip(&column_of) {
                *dst = row.values[col];
            }
            (row.filename.clone(), b)
        });
        Ok(FixtureBackend::new(bits, prompts))
    }

    /// Read `image_id,bit1..bit40` rows.
    pub fn from_csv<R: Read>(reader: R, prompts: PromptIndex) -> Result<Self, ClassifierError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let fmt = |line: usize, message: String| ClassifierError::Format { line, message };
        let header = rdr.headers().map_err(|e| fmt(1, e.to_string()))?.clone();
        let expected: Vec<String> = std::iter::once("image_id".to_owned())
            .chain((1..=ATTRIBUTE_COUNT).map(|i| format!("bit{i}")))
            .collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(fmt(1, "expected header image_id,bit1..bit40".into()));
        }
        let mut bits = HashMap::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| fmt(line, e.to_string()))?;
            let mut b = [0i8; ATTRIBUTE_COUNT];
            for (k, dst) in b.iter_mut().enumerate() {
                *dst = match record[k + 1].trim() {
                    "1" | "+1" => 1,
                    "-1" => -1,
                    other => return Err(fmt(line, format!("bit{} is {other:?}, not ±1", k + 1))),
                };
            }
            if bits.insert(record[0].trim().to_owned(), b).is_some() {
                return Err(fmt(line, format!("duplicate image id {:?}", &record[0])));
            }
        }
        Ok(FixtureBackend::new(bits, prompts))
    }

    pub fn bits(&self, image_id: &str) -> Option<&[i8; ATTRIBUTE_COUNT]> {
        self.bits.get(image_id)
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.bits.keys().map(String::as_str)
    }
}

impl EncoderBackend for FixtureBackend {
    fn name(&self) -> &str {
        "fixture"
    }

    fn embedding_dim(&self) -> usize {
        FIXTURE_DIM
    }

    fn logit_scale(&self) -> f64 {
        self.logit_scale
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError> {
        let bits = self
            .bits
            .get(image.file_name())
            .ok_or_else(|| ClassifierError::UnknownImage(image.to_string()))?;
        let scale = (ATTRIBUTE_COUNT as f32).sqrt();
        let mut v: Vec<f32> = bits.iter().map(|&b| f32::from(b) / scale).collect();
        v.push(0.0);
        Ok(Embedding::new(v))
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
        let mut v = vec![0.0f32; FIXTURE_DIM];
        match self.prompts.get(text) {
            Some(PromptMapping::Neutral) => {}
            Some(PromptMapping::Attribute { index, polarity }) => v[index] = f32::from(polarity),
            None => return Err(ClassifierError::UnknownPrompt(text.to_owned())),
        }
        Ok(Embedding::new(v))
    }
}
