//! Prompt pairs and the attribute catalog.
//!
//! Every question the player asks ends up as a [`PromptPair`]: a target
//! caption confronted with a counter caption. Pre-set questions come from a
//! [`Catalog`] loaded from a CSV data file, so prompts can be re-engineered
//! without a rebuild.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// Caption confronted with the player's prompt in "target vs neutral" mode.
pub const NEUTRAL_PROMPT: &str = "A picture of a person";

/// Number of binary labels in the CelebA annotation.
pub const ATTRIBUTE_COUNT: usize = 40;

/// Column header of a catalog file.
pub const CATALOG_HEADER: [&str; 5] = ["attribute", "target", "counter", "method", "provenance"];

/// The 40 CelebA attribute labels, in annotation-file order.
pub const CELEBA_LABELS: [&str; ATTRIBUTE_COUNT] = [
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Attractive",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Big_Lips",
    "Big_Nose",
    "Black_Hair",
    "Blond_Hair",
    "Blurry",
    "Brown_Hair",
    "Bushy_Eyebrows",
    "Chubby",
    "Double_Chin",
    "Eyeglasses",
    "Goatee",
    "Gray_Hair",
    "Heavy_Makeup",
    "High_Cheekbones",
    "Male",
    "Mouth_Slightly_Open",
    "Mustache",
    "Narrow_Eyes",
    "No_Beard",
    "Oval_Face",
    "Pale_Skin",
    "Pointy_Nose",
    "Receding_Hairline",
    "Rosy_Cheeks",
    "Sideburns",
    "Smiling",
    "Straight_Hair",
    "Wavy_Hair",
    "Wearing_Earrings",
    "Wearing_Hat",
    "Wearing_Lipstick",
    "Wearing_Necklace",
    "Wearing_Necktie",
    "Young",
];

const DEFAULT_CATALOG: &str = include_str!("../assets/catalog.csv");
const DEFAULT_NEUTRAL_PROMPTS: &str = include_str!("../assets/neutral_prompts.csv");

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum CatalogError {
    #[error("invalid prompt: {0}")]
    Validation(String),
    #[error("unknown attribute {name:?} (did you mean {}?)", .nearest.join(", "))]
    Miss { name: String, nearest: Vec<String> },
    #[error("catalog format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("catalog I/O error: {0}")]
    Io(String),
}

/// How the counter caption relates to the target caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Neutral,
    Contrary,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Neutral => "neutral",
            Method::Contrary => "contrary",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PaperTable1,
    PaperTable2,
    DerivedTemplate,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::PaperTable1 => "paper_table1",
            Provenance::PaperTable2 => "paper_table2",
            Provenance::DerivedTemplate => "derived_template",
        }
    }
}

/// Two captions confronted against one image. The higher-scoring caption
/// decides the binary answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPair {
    target_text: String,
    counter_text: String,
    method: Method,
}

impl PromptPair {
    pub fn new(target: &str, counter: &str, method: Method) -> Result<Self, CatalogError> {
        let target = non_empty(target, "target")?;
        let counter = non_empty(counter, "counter")?;
        if target == counter {
            return Err(CatalogError::Validation(
                "target and counter prompts must differ".into(),
            ));
        }
        Ok(PromptPair {
            target_text: target.to_owned(),
            counter_text: counter.to_owned(),
            method,
        })
    }

    pub fn target(&self) -> &str {
        &self.target_text
    }

    pub fn counter(&self) -> &str {
        &self.counter_text
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// The same pair with target and counter exchanged.
    pub fn swapped(&self) -> PromptPair {
        PromptPair {
            target_text: self.counter_text.clone(),
            counter_text: self.target_text.clone(),
            method: self.method,
        }
    }
}

fn non_empty<'a>(text: &'a str, what: &str) -> Result<&'a str, CatalogError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        Err(CatalogError::Validation(format!("{what} prompt is empty")))
    } else {
        Ok(trimmed)
    }
}

/// Confront a player-written prompt with [`NEUTRAL_PROMPT`].
pub fn neutral_pair(user_text: &str) -> Result<PromptPair, CatalogError> {
    PromptPair::new(user_text, NEUTRAL_PROMPT, Method::Neutral)
}

/// Confront two player-written prompts of opposite meaning.
pub fn contrary_pair(text_a: &str, text_b: &str) -> Result<PromptPair, CatalogError> {
    PromptPair::new(text_a, text_b, Method::Contrary)
}

/// Canonical attribute name: lowercase, underscores as spaces, single-spaced.
///
/// `"Wearing_Hat"`, `"wearing hat"` and `" Wearing  hat "` all map to
/// `"wearing hat"`.
pub fn normalize_label(label: &str) -> String {
    label
        .replace('_', " ")
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Target caption used for attributes without a hand-written prompt.
pub fn template_prompt(label: &str) -> String {
    format!("{NEUTRAL_PROMPT} with {}", normalize_label(label))
}

fn negation_warning(name: &str) -> Option<String> {
    let negated = name
        .split_whitespace()
        .any(|w| matches!(w, "no" | "not" | "without"));
    negated.then(|| {
        format!(
            "\"{name}\" is phrased as a negation; dual-encoder models tend to ignore \
             the negating word, so answers may be inverted"
        )
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub attribute: String,
    pub pair: PromptPair,
    pub provenance: Provenance,
}

impl CatalogEntry {
    pub fn warning(&self) -> Option<String> {
        negation_warning(&self.attribute)
    }
}

/// Immutable set of 40 pre-set questions, one per CelebA attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
    index: HashMap<String, usize>,
}

#[derive(Debug, serde::Deserialize)]
struct CatalogRow {
    attribute: String,
    target: String,
    counter: String,
    method: String,
    provenance: String,
}

impl Catalog {
    /// The game catalog shipped with the crate: Table-style contrary pairs
    /// where available, neutral pairs otherwise.
    pub fn shipped() -> Catalog {
        Catalog::from_csv(DEFAULT_CATALOG.as_bytes()).expect("shipped catalog is well-formed")
    }

    /// Target-vs-neutral prompts for all 40 attributes, used by the benchmark.
    pub fn shipped_neutral() -> Catalog {
        Catalog::from_csv(DEFAULT_NEUTRAL_PROMPTS.as_bytes())
            .expect("shipped neutral prompts are well-formed")
    }

    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<Catalog, CatalogError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let key = normalize_label(&entry.attribute);
            if index.insert(key, i).is_some() {
                return Err(CatalogError::Format {
                    line: i + 2,
                    message: format!("duplicate attribute {:?}", entry.attribute),
                });
            }
        }
        if entries.len() != ATTRIBUTE_COUNT {
            return Err(CatalogError::Format {
                line: entries.len() + 1,
                message: format!(
                    "expected {ATTRIBUTE_COUNT} attributes, found {}",
                    entries.len()
                ),
            });
        }
        Ok(Catalog { entries, index })
    }

    /// Parse a catalog file (see [`CATALOG_HEADER`]).
    pub fn from_csv<R: Read>(reader: R) -> Result<Catalog, CatalogError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| CatalogError::Format { line: 1, message: e.to_string() })?;
        if header.iter().ne(CATALOG_HEADER) {
            return Err(CatalogError::Format {
                line: 1,
                message: format!("expected header {}", CATALOG_HEADER.join(",")),
            });
        }
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<CatalogRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| CatalogError::Format { line, message: e.to_string() })?;
            let method = match row.method.as_str() {
                "neutral" => Method::Neutral,
                "contrary" => Method::Contrary,
                other => {
                    return Err(CatalogError::Format {
                        line,
                        message: format!("unknown method {other:?}"),
                    })
                }
            };
            let provenance = match row.provenance.as_str() {
                "paper_table1" => Provenance::PaperTable1,
                "paper_table2" => Provenance::PaperTable2,
                "derived_template" => Provenance::DerivedTemplate,
                other => {
                    return Err(CatalogError::Format {
                        line,
                        message: format!("unknown provenance {other:?}"),
                    })
                }
            };
            let attribute = normalize_label(&row.attribute);
            if attribute.is_empty() {
                return Err(CatalogError::Format { line, message: "empty attribute".into() });
            }
            let pair = PromptPair::new(&row.target, &row.counter, method)
                .map_err(|e| CatalogError::Format { line, message: e.to_string() })?;
            entries.push(CatalogEntry { attribute, pair, provenance });
        }
        Catalog::from_entries(entries)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Catalog, CatalogError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| CatalogError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Catalog::from_csv(file)
    }

    /// Write the catalog in the same format [`Catalog::from_csv`] reads.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), CatalogError> {
        let mut wtr = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Always)
            .from_writer(writer);
        let io = |e: csv::Error| CatalogError::Io(e.to_string());
        wtr.write_record(CATALOG_HEADER).map_err(io)?;
        for e in &self.entries {
            wtr.write_record([
                e.attribute.as_str(),
                e.pair.target(),
                e.pair.counter(),
                e.pair.method().as_str(),
                e.provenance.as_str(),
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| CatalogError::Io(e.to_string()))
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    /// Attribute names in file order.
    pub fn list_attributes(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.attribute.as_str()).collect()
    }

    pub fn entry(&self, name: &str) -> Result<&CatalogEntry, CatalogError> {
        match self.index.get(&normalize_label(name)) {
            Some(&i) => Ok(&self.entries[i]),
            None => Err(CatalogError::Miss {
                name: name.to_owned(),
                nearest: self.nearest(name, 3),
            }),
        }
    }

    /// Prompt pair for a pre-set question.
    pub fn lookup_attribute(&self, name: &str) -> Result<PromptPair, CatalogError> {
        self.entry(name).map(|e| e.pair.clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(&normalize_label(name))
    }

    fn nearest(&self, name: &str, count: usize) -> Vec<String> {
        let query = normalize_label(name);
        let mut scored: Vec<(usize, &str)> = self
            .entries
            .iter()
            .map(|e| (strsim::levenshtein(&query, &e.attribute), e.attribute.as_str()))
            .collect();
        scored.sort();
        scored.into_iter().take(count).map(|(_, n)| n.to_owned()).collect()
    }
}
