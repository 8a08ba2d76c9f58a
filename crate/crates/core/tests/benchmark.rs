use std::collections::HashMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guesswho_core::benchmark::{
    compare_methods, emit_report, evaluate_catalog, evaluate_prompt_pair_with, parse_attr_file,
    parse_report, round2, select_eval_subset, AttributeRow, AttributeTable, BenchError,
    EvalSubset, ReportFormat, ReportRow,
};
use guesswho_core::catalog::{neutral_pair, Catalog, Method, ATTRIBUTE_COUNT, CELEBA_LABELS};
use guesswho_core::classifier::{
    ClassifierError, Embedding, EncoderBackend, FixtureBackend, ImageRef, PromptIndex,
};
use guesswho_core::Execution;

/// Random unit vectors for a fixed set of images and captions.
struct Lookup {
    images: HashMap<String, Vec<f32>>,
    texts: HashMap<String, Vec<f32>>,
}

impl EncoderBackend for Lookup {
    fn name(&self) -> &str {
        "lookup"
    }
    fn embedding_dim(&self) -> usize {
        8
    }
    fn logit_scale(&self) -> f64 {
        100.0
    }
    fn embed_image(&self, image: &ImageRef) -> Result<Embedding, ClassifierError> {
        self.images
            .get(image.as_str())
            .map(|v| Embedding::new(v.clone()))
            .ok_or_else(|| ClassifierError::UnknownImage(image.to_string()))
    }
    fn embed_text(&self, text: &str) -> Result<Embedding, ClassifierError> {
        self.texts
            .get(text)
            .map(|v| Embedding::new(v.clone()))
            .ok_or_else(|| ClassifierError::UnknownPrompt(text.to_owned()))
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let v: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

const TARGET: &str = "A picture of a person with a hat";

fn lookup(seed: u64, n_images: usize) -> (Lookup, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..n_images).map(|i| format!("{i:03}.jpg")).collect();
    let images = names.iter().map(|n| (n.clone(), unit(&mut rng))).collect();
    let texts = [TARGET, guesswho_core::catalog::NEUTRAL_PROMPT]
        .iter()
        .map(|t| (t.to_string(), unit(&mut rng)))
        .collect();
    (Lookup { images, texts }, names)
}

// Independent recomputation: dot products in f64 straight from the tables.
fn oracle_positive(b: &Lookup, image: &str, target: &str, counter: &str) -> bool {
    let dot = |t: &str| -> f64 {
        b.images[image].iter().zip(&b.texts[t]).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
    };
    dot(target) > dot(counter)
}

#[test]
fn confusion_matches_brute_force() {
    for seed in 0..50 {
        let (backend, names) = lookup(seed, 20);
        let subset = EvalSubset {
            attribute: "wearing hat".into(),
            positives: names[..10].iter().map(ImageRef::new).collect(),
            negatives: names[10..].iter().map(ImageRef::new).collect(),
        };
        let pair = neutral_pair(TARGET).unwrap();
        let r = evaluate_prompt_pair_with(&backend, &subset, &pair, Execution::Sequential).unwrap();

        let neutral = guesswho_core::catalog::NEUTRAL_PROMPT;
        let tp = names[..10].iter().filter(|n| oracle_positive(&backend, n, TARGET, neutral)).count();
        let tn = names[10..].iter().filter(|n| !oracle_positive(&backend, n, TARGET, neutral)).count();
        assert_eq!((r.counts.tp, r.counts.fn_), (tp as u64, 10 - tp as u64));
        assert_eq!((r.counts.tn, r.counts.fp), (tn as u64, 10 - tn as u64));
        // n = 10 per side, so rates are exact multiples of 10
        assert_eq!(r.tpr, 10.0 * tp as f64);
        assert_eq!(r.tnr, 10.0 * tn as f64);
        assert_eq!(r.acc, 5.0 * (tp + tn) as f64);
    }
}

#[test]
fn swapping_the_pair_mirrors_both_rates() {
    for seed in 0..50 {
        let (backend, names) = lookup(100 + seed, 10);
        let subset = EvalSubset {
            attribute: "wearing hat".into(),
            positives: names[..4].iter().map(ImageRef::new).collect(),
            negatives: names[4..].iter().map(ImageRef::new).collect(),
        };
        let pair = neutral_pair(TARGET).unwrap();
        let a = evaluate_prompt_pair_with(&backend, &subset, &pair, Execution::Parallel).unwrap();
        let b = evaluate_prompt_pair_with(&backend, &subset, &pair.swapped(), Execution::Parallel).unwrap();
        assert!((a.tpr + b.tpr - 100.0).abs() < 0.011, "{a:?} {b:?}");
        assert!((a.tnr + b.tnr - 100.0).abs() < 0.011);
        assert!((a.tpr + a.tnr + b.tpr + b.tnr - 200.0).abs() < 0.021);
    }
}

#[test]
fn rates_ignore_order_and_scheduling() {
    let (backend, names) = lookup(7, 60);
    let pair = neutral_pair(TARGET).unwrap();
    let base = EvalSubset {
        attribute: "wearing hat".into(),
        positives: names[..25].iter().map(ImageRef::new).collect(),
        negatives: names[25..].iter().map(ImageRef::new).collect(),
    };
    let reference = evaluate_prompt_pair_with(&backend, &base, &pair, Execution::Sequential).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut s = base.clone();
        s.positives.shuffle(&mut rng);
        s.negatives.shuffle(&mut rng);
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(evaluate_prompt_pair_with(&backend, &s, &pair, exec).unwrap(), reference);
        }
    }
}

fn random_table(seed: u64, n: usize) -> AttributeTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let mut values = [0i8; ATTRIBUTE_COUNT];
            values.iter_mut().for_each(|v| *v = if rng.gen_bool(0.3) { 1 } else { -1 });
            AttributeRow { filename: format!("{:06}.jpg", i + 1), values }
        })
        .collect();
    AttributeTable::new(CELEBA_LABELS.iter().map(|s| s.to_string()).collect(), rows).unwrap()
}

#[test]
fn subset_is_first_cap_in_file_order() {
    let table = random_table(11, 300);
    for (col, label) in CELEBA_LABELS.iter().enumerate() {
        for cap in [1, 5, 50, 4000] {
            let s = select_eval_subset(&table, label, cap).unwrap();
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for row in table.rows() {
                let bucket = if row.values[col] == 1 { &mut pos } else { &mut neg };
                if bucket.len() < cap {
                    bucket.push(ImageRef::new(row.filename.clone()));
                }
            }
            assert_eq!(s.positives, pos);
            assert_eq!(s.negatives, neg);
        }
    }
}

#[test]
fn annotation_file_round_trips() {
    let table = random_table(5, 40);
    let text = table.to_attr_file();
    let parsed = parse_attr_file(text.as_bytes()).unwrap();
    assert_eq!(parsed, table);
}

#[test]
fn malformed_annotation_reports_line() {
    let text = random_table(5, 3).to_attr_file();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[3] = format!("000002.jpg 0{}", " -1".repeat(ATTRIBUTE_COUNT - 1));
    let text = lines.join("\n");
    match parse_attr_file(text.as_bytes()) {
        Err(BenchError::Format { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fixture_benchmark_is_perfect() {
    // the fixture encodes every label exactly, so both methods score 100 as
    // long as no face is annotated both straight- and wavy-haired (the
    // contrary pair for straight hair uses the wavy caption)
    let raw = random_table(21, 200);
    let straight = raw.column("straight hair").unwrap();
    let wavy = raw.column("wavy hair").unwrap();
    let rows = raw
        .rows()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.values[straight] == 1 {
                r.values[wavy] = -1;
            }
            r
        })
        .collect();
    let table = AttributeTable::new(raw.attribute_names().to_vec(), rows).unwrap();
    let backend = FixtureBackend::from_table(&table, PromptIndex::shipped()).unwrap();
    for (catalog, method) in [(Catalog::shipped_neutral(), Method::Neutral), (Catalog::shipped(), Method::Contrary)] {
        let results =
            evaluate_catalog(&backend, &table, std::path::Path::new(""), &catalog, Some(method), 50, Execution::Parallel)
                .unwrap();
        assert!(!results.is_empty());
        for r in &results {
            assert_eq!((r.tpr, r.tnr, r.acc), (100.0, 100.0, 100.0), "{}", r.attribute);
            assert_eq!(r.pair.method(), method);
        }
    }
}

#[test]
fn missing_side_is_insufficient_data() {
    let mut table = random_table(2, 10);
    let names = table.attribute_names().to_vec();
    let rows: Vec<AttributeRow> = table
        .rows()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.values[4] = -1;
            r
        })
        .collect();
    table = AttributeTable::new(names, rows).unwrap();
    let backend = FixtureBackend::from_table(&table, PromptIndex::shipped()).unwrap();
    let subset = select_eval_subset(&table, "bald", 10).unwrap();
    let err = evaluate_prompt_pair_with(&backend, &subset, &Catalog::shipped().lookup_attribute("bald").unwrap(), Execution::Sequential)
        .unwrap_err();
    assert!(matches!(err, BenchError::InsufficientData { .. }), "{err:?}");
}

#[test]
fn comparison_requires_matching_attributes() {
    let neutral = [("male", 97.11), ("bald", 81.58)];
    let contrary = [("male", 98.54)];
    assert!(matches!(compare_methods(&neutral, &contrary), Err(BenchError::Pairing(a)) if a == "bald"));
    let rows = compare_methods(&neutral[..1], &contrary).unwrap();
    assert_eq!(rows[0].gain, 1.43);
}

#[test]
fn round2_halves_go_up() {
    assert_eq!(round2(62.505), 62.51);
    assert_eq!(round2(0.125), 0.13);
    assert_eq!(round2(33.333_333), 33.33);
    assert_eq!(round2(66.666_666), 66.67);
}

fn text_strategy() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z ,'|]{0,30}[a-z]"
}

fn rate() -> impl Strategy<Value = f64> {
    (0u32..=10000).prop_map(|v| f64::from(v) / 100.0)
}

fn row_strategy(comparison: bool) -> impl Strategy<Value = ReportRow> {
    (
        "[a-z][a-z ]{0,12}[a-z]",
        text_strategy(),
        text_strategy(),
        rate(),
        rate(),
        (-10000i32..=10000).prop_map(|v| f64::from(v) / 100.0),
    )
        .prop_map(move |(label, target, counter, tpr, tnr, gain)| ReportRow {
            label,
            target,
            counter: comparison.then_some(counter),
            tpr,
            tnr,
            acc: round2((tpr + tnr) / 2.0),
            gain: comparison.then_some(gain),
        })
}

fn rows_strategy() -> impl Strategy<Value = Vec<ReportRow>> {
    any::<bool>().prop_flat_map(|c| proptest::collection::vec(row_strategy(c), 0..12))
}

proptest! {
    #[test]
    fn reports_round_trip(rows in rows_strategy(), md in any::<bool>()) {
        let format = if md { ReportFormat::Markdown } else { ReportFormat::Csv };
        let text = emit_report(&rows, format);
        let parsed = parse_report(&text, format).unwrap();
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| b.acc.total_cmp(&a.acc).then_with(|| a.label.cmp(&b.label)));
        prop_assert_eq!(parsed.len(), sorted.len());
        for (p, s) in parsed.iter().zip(&sorted) {
            prop_assert_eq!(p, s);
        }
    }

    #[test]
    fn reports_sorted_by_accuracy(rows in rows_strategy()) {
        let parsed = parse_report(&emit_report(&rows, ReportFormat::Csv), ReportFormat::Csv).unwrap();
        for w in parsed.windows(2) {
            prop_assert!(w[0].acc > w[1].acc || (w[0].acc == w[1].acc && w[0].label <= w[1].label));
        }
    }
}
