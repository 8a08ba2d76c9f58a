//! CSV and markdown result tables.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BenchError, ComparisonRow, EvalResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// One table row. `counter` and `gain` are present only in comparison
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub target: String,
    pub counter: Option<String>,
    pub tpr: f64,
    pub tnr: f64,
    pub acc: f64,
    pub gain: Option<f64>,
}

impl ReportRow {
    pub fn from_eval(r: &EvalResult) -> Self {
        ReportRow {
            label: r.attribute.clone(),
            target: r.pair.target().to_owned(),
            counter: None,
            tpr: r.tpr,
            tnr: r.tnr,
            acc: r.acc,
            gain: None,
        }
    }

    /// Contrary-method rates with the gain over the neutral method.
    pub fn comparison(contrary: &EvalResult, row: &ComparisonRow) -> Self {
        ReportRow {
            counter: Some(contrary.pair.counter().to_owned()),
            gain: Some(row.gain),
            ..ReportRow::from_eval(contrary)
        }
    }
}

/// Join contrary results with their comparison rows by attribute.
pub fn comparison_rows(
    contrary: &[EvalResult],
    comparisons: &[ComparisonRow],
) -> Result<Vec<ReportRow>, BenchError> {
    comparisons
        .iter()
        .map(|c| {
            contrary
                .iter()
                .find(|r| r.attribute == c.attribute)
                .map(|r| ReportRow::comparison(r, c))
                .ok_or_else(|| BenchError::Pairing(c.attribute.clone()))
        })
        .collect()
}

const SINGLE_COLUMNS: [&str; 5] = ["label", "target prompt", "TPR", "TNR", "Acc"];
const COMPARISON_COLUMNS: [&str; 7] =
    ["label", "target prompt", "counter prompt", "TPR", "TNR", "Acc", "Gain"];

fn sorted(rows: &[ReportRow]) -> Vec<&ReportRow> {
    let mut out: Vec<&ReportRow> = rows.iter().collect();
    out.sort_by(|a, b| {
        b.acc
            .partial_cmp(&a.acc)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    out
}

fn is_comparison(rows: &[ReportRow]) -> bool {
    rows.iter().any(|r| r.gain.is_some())
}

fn cells(row: &ReportRow, comparison: bool) -> Vec<String> {
    let mut c = vec![row.label.clone(), row.target.clone()];
    if comparison {
        c.push(row.counter.clone().unwrap_or_default());
    }
    c.extend([format!("{:.2}", row.tpr), format!("{:.2}", row.tnr), format!("{:.2}", row.acc)]);
    if comparison {
        c.push(row.gain.map(|g| format!("{g:+.2}")).unwrap_or_default());
    }
    c
}

/// Render rows sorted by accuracy (descending, ties by label).
pub fn emit_report(rows: &[ReportRow], format: ReportFormat) -> String {
    let comparison = is_comparison(rows);
    let header: &[&str] = if comparison { &COMPARISON_COLUMNS } else { &SINGLE_COLUMNS };
    let body: Vec<Vec<String>> = sorted(rows).into_iter().map(|r| cells(r, comparison)).collect();
    match format {
        ReportFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(header).expect("write to memory");
            for row in &body {
                wtr.write_record(row).expect("write to memory");
            }
            String::from_utf8(wtr.into_inner().expect("flush to memory")).expect("utf-8 input")
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let align: Vec<&str> = header
                .iter()
                .map(|h| if h.contains("prompt") || *h == "label" { "---" } else { "---:" })
                .collect();
            let _ = writeln!(out, "| {} |", align.join(" | "));
            for row in &body {
                let escaped: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
                let _ = writeln!(out, "| {} |", escaped.join(" | "));
            }
            out
        }
    }
}

fn parse_number(text: &str, line: usize) -> Result<f64, BenchError> {
    text.trim()
        .trim_start_matches('+')
        .parse()
        .map_err(|_| BenchError::Format { line, message: format!("bad number {text:?}") })
}

fn row_from_cells(cells: &[String], line: usize) -> Result<ReportRow, BenchError> {
    let get = |i: usize| cells[i].clone();
    match cells.len() {
        5 => Ok(ReportRow {
            label: get(0),
            target: get(1),
            counter: None,
            tpr: parse_number(&cells[2], line)?,
            tnr: parse_number(&cells[3], line)?,
            acc: parse_number(&cells[4], line)?,
            gain: None,
        }),
        7 => Ok(ReportRow {
            label: get(0),
            target: get(1),
            counter: Some(get(2)),
            tpr: parse_number(&cells[3], line)?,
            tnr: parse_number(&cells[4], line)?,
            acc: parse_number(&cells[5], line)?,
            gain: Some(parse_number(&cells[6], line)?),
        }),
        n => Err(BenchError::Format { line, message: format!("expected 5 or 7 columns, found {n}") }),
    }
}

fn split_markdown_row(line: &str) -> Vec<String> {
    let inner = line.trim().trim_start_matches('|');
    let inner = inner.strip_suffix('|').unwrap_or(inner);
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_owned()),
            _ => cur.push(ch),
        }
    }
    cells.push(cur.trim().to_owned());
    cells
}

/// Read back a report produced by [`emit_report`].
pub fn parse_report(text: &str, format: ReportFormat) -> Result<Vec<ReportRow>, BenchError> {
    match format {
        ReportFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            rdr.records()
                .enumerate()
                .map(|(i, rec)| {
                    let rec = rec.map_err(|e| BenchError::Format { line: i + 2, message: e.to_string() })?;
                    let cells: Vec<String> = rec.iter().map(str::to_owned).collect();
                    row_from_cells(&cells, i + 2)
                })
                .collect()
        }
        ReportFormat::Markdown => text
            .lines()
            .enumerate()
            .filter(|(_, l)| l.trim_start().starts_with('|'))
            .skip(2)
            .map(|(i, l)| row_from_cells(&split_markdown_row(l), i + 1))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, acc: f64) -> ReportRow {
        ReportRow {
            label: label.into(),
            target: format!("A picture of a person with {label}"),
            counter: None,
            tpr: acc,
            tnr: acc,
            acc,
            gain: None,
        }
    }

    #[test]
    fn sorted_by_accuracy_descending() {
        let csv = emit_report(&[row("goatee", 82.78), row("male", 97.11)], ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "label,target prompt,TPR,TNR,Acc");
        assert!(lines[1].starts_with("male,"));
        assert!(lines[2].starts_with("goatee,"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn ties_break_by_label() {
        let md = emit_report(&[row("zeta", 50.0), row("alpha", 50.0)], ReportFormat::Markdown);
        let rows = parse_report(&md, ReportFormat::Markdown).unwrap();
        assert_eq!(rows[0].label, "alpha");
        assert_eq!(rows[1].label, "zeta");
    }

    #[test]
    fn output_is_deterministic() {
        let rows = [row("b", 1.0), row("a", 2.0), row("c", 2.0)];
        for f in [ReportFormat::Csv, ReportFormat::Markdown] {
            assert_eq!(emit_report(&rows, f), emit_report(&rows, f));
        }
    }

    #[test]
    fn comparison_layout_has_counter_and_signed_gain() {
        let mut r = row("attractive", 50.2);
        r.target = "A picture of an attractive person".into();
        r.counter = Some("A picture of an unattractive person".into());
        r.gain = Some(-1.26);
        let md = emit_report(&[r.clone()], ReportFormat::Markdown);
        assert!(md.starts_with("| label | target prompt | counter prompt | TPR | TNR | Acc | Gain |"));
        assert!(md.contains("| -1.26 |"));
        let csv = emit_report(&[r.clone()], ReportFormat::Csv);
        assert_eq!(parse_report(&csv, ReportFormat::Csv).unwrap(), vec![r]);
    }

    #[test]
    fn pipes_in_prompts_survive_markdown() {
        let mut r = row("odd", 10.0);
        r.target = "a | b, \"quoted\"".into();
        let md = emit_report(&[r.clone()], ReportFormat::Markdown);
        assert_eq!(parse_report(&md, ReportFormat::Markdown).unwrap(), vec![r]);
    }
}
