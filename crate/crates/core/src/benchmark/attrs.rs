use std::collections::HashSet;
use std::io::BufRead;

use crate::catalog::{normalize_label, ATTRIBUTE_COUNT};
use crate::classifier::ImageRef;

use super::BenchError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeRow {
    pub filename: String,
    pub values: [i8; ATTRIBUTE_COUNT],
}

/// Parsed `list_attr_celeba.txt`: 40 attribute names and one ±1 row per image,
/// in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    names: Vec<String>,
    rows: Vec<AttributeRow>,
}

impl AttributeTable {
    pub fn new(names: Vec<String>, rows: Vec<AttributeRow>) -> Result<Self, BenchError> {
        if names.len() != ATTRIBUTE_COUNT {
            return Err(BenchError::Format {
                line: 2,
                message: format!("expected {ATTRIBUTE_COUNT} attribute names, found {}", names.len()),
            });
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if !seen.insert(row.filename.as_str()) {
                return Err(BenchError::Format {
                    line: i + 3,
                    message: format!("duplicate filename {}", row.filename),
                });
            }
        }
        Ok(AttributeTable { names, rows })
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[AttributeRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column of an attribute, matched case- and underscore-insensitively.
    pub fn column(&self, attribute: &str) -> Option<usize> {
        let key = normalize_label(attribute);
        self.names.iter().position(|n| normalize_label(n) == key)
    }

    /// Serialize in the annotation-file layout [`parse_attr_file`] reads.
    pub fn to_attr_file(&self) -> String {
        let mut out = format!("{}\n{}\n", self.rows.len(), self.names.join(" "));
        for row in &self.rows {
            out.push_str(&row.filename);
            for v in row.values {
                out.push_str(if v > 0 { "  1" } else { " -1" });
            }
            out.push('\n');
        }
        out
    }
}

/// Parse the CelebA attribute annotation layout:
///
/// ```text
/// <row count>
/// <40 attribute names>
/// <filename> <v1> ... <v40>      (vᵢ ∈ {1, -1})
/// ```
pub fn parse_attr_file<R: BufRead>(reader: R) -> Result<AttributeTable, BenchError> {
    let fmt = |line: usize, message: String| BenchError::Format { line, message };
    let mut lines = reader.lines();
    let mut header_line = |n: usize, what: &str| -> Result<String, BenchError> {
        match lines.next() {
            Some(Ok(text)) => Ok(text),
            Some(Err(e)) => Err(fmt(n, e.to_string())),
            None => Err(fmt(n, format!("missing {what}"))),
        }
    };

    let count_line = header_line(1, "row count")?;
    let declared: usize = count_line
        .trim()
        .parse()
        .map_err(|_| fmt(1, format!("row count {:?} is not an integer", count_line.trim())))?;
    let names: Vec<String> =
        header_line(2, "attribute names")?.split_whitespace().map(str::to_owned).collect();
    if names.len() != ATTRIBUTE_COUNT {
        return Err(fmt(2, format!("expected {ATTRIBUTE_COUNT} attribute names, found {}", names.len())));
    }

    let mut rows = Vec::with_capacity(declared);
    for (i, text) in lines.enumerate() {
        let n = i + 3;
        let text = text.map_err(|e| fmt(n, e.to_string()))?;
        let mut fields = text.split_whitespace();
        let Some(filename) = fields.next() else { continue };
        let mut values = [0i8; ATTRIBUTE_COUNT];
        let mut width = 0;
        for field in fields {
            if width == ATTRIBUTE_COUNT {
                return Err(fmt(n, format!("more than {ATTRIBUTE_COUNT} values")));
            }
            values[width] = match field {
                "1" => 1,
                "-1" => -1,
                other => return Err(fmt(n, format!("value {other:?} is not 1 or -1"))),
            };
            width += 1;
        }
        if width != ATTRIBUTE_COUNT {
            return Err(fmt(n, format!("expected {ATTRIBUTE_COUNT} values, found {width}")));
        }
        rows.push(AttributeRow { filename: filename.to_owned(), values });
    }
    if rows.len() != declared {
        return Err(fmt(1, format!("declared {declared} rows, found {}", rows.len())));
    }
    AttributeTable::new(names, rows)
}

/// Images used to score one attribute: the first positives and the first
/// negatives in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSubset {
    pub attribute: String,
    pub positives: Vec<ImageRef>,
    pub negatives: Vec<ImageRef>,
}

impl EvalSubset {
    /// Prefix every image with a directory.
    pub fn rooted(self, root: &std::path::Path) -> EvalSubset {
        let join = |v: Vec<ImageRef>| {
            v.into_iter()
                .map(|r| ImageRef::new(root.join(r.as_str()).to_string_lossy().into_owned()))
                .collect()
        };
        EvalSubset {
            attribute: self.attribute,
            positives: join(self.positives),
            negatives: join(self.negatives),
        }
    }
}

pub fn select_eval_subset(
    table: &AttributeTable,
    attribute: &str,
    cap: usize,
) -> Result<EvalSubset, BenchError> {
    let col = table
        .column(attribute)
        .ok_or_else(|| BenchError::UnknownAttribute(attribute.to_owned()))?;
    let take = |sign: i8| -> Vec<ImageRef> {
        table
            .rows()
            .iter()
            .filter(|r| r.values[col] == sign)
            .take(cap)
            .map(|r| ImageRef::new(r.filename.clone()))
            .collect()
    };
    Ok(EvalSubset {
        attribute: normalize_label(attribute),
        positives: take(1),
        negatives: take(-1),
    })
}
