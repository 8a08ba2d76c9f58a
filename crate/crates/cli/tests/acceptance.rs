//! Acceptance checks, one line each: `PASS`, `FAIL` or `SKIP`.
//!
//! The last check needs CLIP weights exported to ONNX and the CelebA
//! attribute file with its aligned images. It runs when these variables are
//! set and is skipped otherwise:
//!
//!   GUESSWHO_IMAGE_MODEL  image encoder (.onnx)
//!   GUESSWHO_TEXT_MODEL   text encoder (.onnx)
//!   CELEBA_ROOT           directory holding list_attr_celeba.txt and img_align_celeba/

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guesswho_clip::{OnnxClipBackend, OnnxClipConfig};
use guesswho_core::benchmark::{
    compare_methods, evaluate_prompt_pair_with, parse_attr_file, round2, select_eval_subset,
    EvalSubset,
};
use guesswho_core::catalog::{ATTRIBUTE_COUNT, CELEBA_LABELS};
use guesswho_core::classifier::{decide, softmax_pair, EmbeddingCache, FixtureBackend, PromptIndex};
use guesswho_core::engine::{apply_scoring, CardId, CardStatus, EngineError, ScoringAction};
use guesswho_core::{Catalog, Decision, Execution, GameSession, ImageRef, Question};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Outcome::Pass(pass)
    } else {
        Outcome::Fail(fail)
    }
}

// ---------------------------------------------------------------- engine

const FIXTURE_IMAGES: usize = 64;
const BOARD: usize = 24;
const GAMES: u64 = 1000;
const MAX_TURNS: usize = 40;

fn random_bits(rng: &mut ChaCha8Rng) -> [i8; ATTRIBUTE_COUNT] {
    let mut b = [0i8; ATTRIBUTE_COUNT];
    b.iter_mut().for_each(|v| *v = if rng.gen() { 1 } else { -1 });
    b
}

fn all_captions(catalog: &Catalog, neutral: &Catalog) -> Vec<String> {
    let mut seen = HashSet::new();
    catalog
        .entries()
        .iter()
        .chain(neutral.entries())
        .flat_map(|e| [e.pair.target().to_owned(), e.pair.counter().to_owned()])
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

enum Move {
    Ask(Question),
    Guess(CardId),
}

fn random_move(rng: &mut ChaCha8Rng, catalog: &Catalog, neutral: &Catalog, captions: &[String]) -> Move {
    match rng.gen_range(0..10) {
        0..=3 => {
            let names = catalog.list_attributes();
            Move::Ask(Question::FromList { attribute: names.choose(rng).unwrap().to_string() })
        }
        4..=5 => {
            let e = neutral.entries().choose(rng).unwrap();
            Move::Ask(Question::OnePrompt { text: e.pair.target().to_owned() })
        }
        6..=8 => {
            let two: Vec<&String> = captions.choose_multiple(rng, 2).collect();
            Move::Ask(Question::TwoPrompts { text_a: two[0].clone(), text_b: two[1].clone() })
        }
        _ => Move::Guess(CardId(rng.gen_range(0..BOARD as u32))),
    }
}

/// Play one game; return its serialized history or the first broken invariant.
fn play_game(
    seed: u64,
    pool: &[ImageRef],
    backend: &FixtureBackend,
    catalog: &Catalog,
    neutral: &Catalog,
    captions: &[String],
) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let board: Vec<ImageRef> = pool.choose_multiple(&mut rng, BOARD).cloned().collect();
    let mut s = GameSession::new(format!("g{seed}"), board, rng.gen(), 100).map_err(|e| e.to_string())?;
    let winner = s.winner_id();
    for _ in 0..MAX_TURNS {
        if s.status().is_finished() {
            break;
        }
        let active: Vec<CardId> = s.active_ids();
        let score = s.score();
        let result = match random_move(&mut rng, catalog, neutral, captions) {
            Move::Ask(q) => s.ask(&q, catalog, backend).cloned(),
            Move::Guess(id) => s.guess(id).cloned(),
        };
        let rec = match result {
            Ok(r) => r,
            Err(EngineError::InvalidTarget(_)) => {
                if s.score() != score || s.active_ids() != active {
                    return Err(format!("game {seed}: rejected guess changed the session"));
                }
                continue;
            }
            Err(e) => return Err(format!("game {seed}: {e}")),
        };
        if s.card(winner).unwrap().status != CardStatus::Active {
            return Err(format!("game {seed} turn {}: winner left play", rec.turn));
        }
        if rec.prompt_pair.is_some() {
            let mut union: Vec<CardId> = rec.kept_ids.iter().chain(&rec.discarded_ids).copied().collect();
            union.sort();
            let overlap = rec.kept_ids.iter().any(|k| rec.discarded_ids.contains(k));
            if union != active || overlap {
                return Err(format!("game {seed} turn {}: kept/discarded do not partition the active set", rec.turn));
            }
            if !rec.kept_ids.contains(&winner) {
                return Err(format!("game {seed} turn {}: winner discarded", rec.turn));
            }
        }
        if rec.score_after > rec.score_before || rec.score_before != score {
            return Err(format!("game {seed} turn {}: score went {} -> {}", rec.turn, rec.score_before, rec.score_after));
        }
    }
    serde_json::to_string(s.history()).map_err(|e| e.to_string())
}

fn engine_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let names: Vec<String> = (0..FIXTURE_IMAGES).map(|i| format!("{:06}.jpg", i + 1)).collect();
    let backend = FixtureBackend::new(
        names.iter().map(|n| (n.clone(), random_bits(&mut rng))).collect::<Vec<_>>(),
        PromptIndex::shipped(),
    );
    let pool: Vec<ImageRef> = names.iter().map(|n| ImageRef::new(format!("celeba/{n}"))).collect();
    let catalog = Catalog::shipped();
    let neutral = Catalog::shipped_neutral();
    let captions = all_captions(&catalog, &neutral);

    let mut turns = 0;
    for seed in 0..GAMES {
        let first = match play_game(seed, &pool, &backend, &catalog, &neutral, &captions) {
            Ok(h) => h,
            Err(e) => return Outcome::Fail(e),
        };
        let again = play_game(seed, &pool, &backend, &catalog, &neutral, &captions).unwrap_or_default();
        if first != again {
            return Outcome::Fail(format!("game {seed}: replay with the same seed diverged"));
        }
        turns += first.matches("\"turn\":").count();
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs < 60.0,
        format!("{GAMES} games x2 replays, {turns} turns, {FIXTURE_IMAGES}-image fixture, {secs:.1}s"),
        format!("invariants held but took {secs:.1}s (limit 60s)"),
    )
}

// ---------------------------------------------------------------- scoring

fn scoring_trace() -> Outcome {
    let q = ScoringAction::Question;
    let a = apply_scoring(100, 14, 10, q, 24);
    let b = apply_scoring(a, 14, 0, q, 24);
    let c = apply_scoring(b, 2, 0, ScoringAction::Guess, 24);
    check(
        (a, b, c) == (86, 70, 58),
        "100 -> 86 -> 70 -> 58".into(),
        format!("100 -> {a} -> {b} -> {c}, expected 86 -> 70 -> 58"),
    )
}

// ---------------------------------------------------------------- rates

fn rates_oracle() -> Outcome {
    let mut checked = 0;
    for seed in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (label_col, label) in CELEBA_LABELS.iter().enumerate() {
            let images: Vec<(String, [i8; ATTRIBUTE_COUNT])> = (0..20)
                .map(|i| {
                    let mut b = random_bits(&mut rng);
                    b[label_col] = if i < 10 { 1 } else { -1 };
                    (format!("{i:02}.jpg"), b)
                })
                .collect();
            let backend = FixtureBackend::new(images.clone(), PromptIndex::shipped());
            let subset = EvalSubset {
                attribute: label.to_string(),
                positives: images[..10].iter().map(|(n, _)| ImageRef::new(n.clone())).collect(),
                negatives: images[10..].iter().map(|(n, _)| ImageRef::new(n.clone())).collect(),
            };
            // ask about a different attribute so the counts are not trivially perfect
            let asked = (label_col + 1 + seed as usize) % ATTRIBUTE_COUNT;
            let pair = Catalog::shipped_neutral().lookup_attribute(CELEBA_LABELS[asked]).unwrap();
            let r = evaluate_prompt_pair_with(&backend, &subset, &pair, Execution::Parallel).unwrap();

            // the neutral caption embeds at the origin, so an image answers
            // yes exactly when it carries the asked attribute
            let tp = images[..10].iter().filter(|(_, b)| b[asked] == 1).count() as u64;
            let tn = images[10..].iter().filter(|(_, b)| b[asked] == -1).count() as u64;
            let want = (tp, 10 - tp, tn, 10 - tn);
            let got = (r.counts.tp, r.counts.fn_, r.counts.tn, r.counts.fp);
            let tpr = 100.0 * tp as f64 / 10.0;
            let tnr = 100.0 * tn as f64 / 10.0;
            if got != want || r.tpr != tpr || r.tnr != tnr || r.acc != round2((tpr + tnr) / 2.0) {
                return Outcome::Fail(format!(
                    "seed {seed} {label}: counts {got:?} vs {want:?}, rates {}/{}/{}",
                    r.tpr, r.tnr, r.acc
                ));
            }
            checked += 1;
        }
    }
    Outcome::Pass(format!("{checked} 10+10 evaluations match brute-force counts; acc = (TPR+TNR)/2"))
}

// ---------------------------------------------------------------- gain

fn gain_reproduction() -> Outcome {
    // neutral accuracy for pale skin, young and straight hair is not printed
    // (the neutral table lists only its top and bottom ten); those three are
    // contrary accuracy minus printed gain, so only the other four test the
    // arithmetic against independent printed values
    let neutral = [
        ("male", 97.11),
        ("bald", 81.58),
        ("smiling", 81.76),
        ("pale skin", 67.94),
        ("young", 64.13),
        ("straight hair", 55.94),
        ("attractive", 51.46),
    ];
    let contrary = [
        ("male", 98.54),
        ("bald", 86.65),
        ("smiling", 84.28),
        ("pale skin", 71.29),
        ("young", 69.72),
        ("straight hair", 62.9),
        ("attractive", 50.2),
    ];
    let expected = [1.43, 5.07, 2.52, 3.35, 5.59, 6.96, -1.26];
    let rows = match compare_methods(&neutral, &contrary) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let worst = rows.iter().zip(expected).map(|(r, e)| (r.gain - e).abs()).fold(0.0, f64::max);
    let got: Vec<String> = rows.iter().map(|r| format!("{:+.2}", r.gain)).collect();
    check(
        rows.len() == 7 && worst <= 0.01,
        format!("gains {} (max error {worst:.3}, tol 0.01; 4 of 7 from printed neutral values)", got.join(" ")),
        format!("gains {} differ by up to {worst:.3}", got.join(" ")),
    )
}

// ---------------------------------------------------------------- decision

fn decision_grid() -> Outcome {
    let grid: Vec<f64> = (-100..=100).map(|i| f64::from(i) / 100.0).collect();
    let scales = [0.01, 1.0, 100.0, 1000.0];
    let ks = [1e-3, 0.5, 3.0, 250.0];
    let mut pairs = 0;
    for &st in &grid {
        for &sc in &grid {
            pairs += 1;
            for &l in &scales {
                let p = decide(st, sc, l);
                if st == sc {
                    if p.decision != Decision::Negative {
                        return Outcome::Fail(format!("tie ({st}, {sc}) at scale {l} is not negative"));
                    }
                } else if p.decision == decide(sc, st, l).decision {
                    return Outcome::Fail(format!("swap of ({st}, {sc}) kept the decision at scale {l}"));
                }
                let (pt, pc) = softmax_pair(l, st, sc);
                if (pt + pc - 1.0).abs() > 1e-9 || (p.decision == Decision::Positive) != (st > sc) {
                    return Outcome::Fail(format!("({st}, {sc}) at scale {l}: argmax mismatch"));
                }
                for &k in &ks {
                    if decide(k * st, k * sc, l).decision != p.decision {
                        return Outcome::Fail(format!("({st}, {sc}) scaled by {k} changed the decision"));
                    }
                }
            }
        }
    }
    Outcome::Pass(format!(
        "{pairs} score pairs x {} logit scales x {} positive factors: antisymmetry, tie -> negative, scale invariance",
        scales.len(),
        ks.len()
    ))
}

// ---------------------------------------------------------------- extended

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).map(PathBuf::from).filter(|p| p.exists())
}

fn extended_male() -> Outcome {
    let (Some(image), Some(text), Some(root)) =
        (env_path("GUESSWHO_IMAGE_MODEL"), env_path("GUESSWHO_TEXT_MODEL"), env_path("CELEBA_ROOT"))
    else {
        return Outcome::Skip("set GUESSWHO_IMAGE_MODEL, GUESSWHO_TEXT_MODEL and CELEBA_ROOT to run".into());
    };
    let run = || -> anyhow::Result<(f64, f64)> {
        let backend = EmbeddingCache::new(OnnxClipBackend::load(&OnnxClipConfig::new(image, text))?);
        let file = std::fs::File::open(root.join("list_attr_celeba.txt"))?;
        let table = parse_attr_file(std::io::BufReader::new(file))?;
        let subset = select_eval_subset(&table, "male", 200)?.rooted(&root.join("img_align_celeba"));
        let neutral = Catalog::shipped_neutral().lookup_attribute("male")?;
        let contrary = Catalog::shipped().lookup_attribute("male")?;
        let n = evaluate_prompt_pair_with(&backend, &subset, &neutral, Execution::default())?;
        let c = evaluate_prompt_pair_with(&backend, &subset, &contrary, Execution::default())?;
        Ok((n.acc, c.acc))
    };
    match run() {
        Ok((n, c)) => check(
            n >= 90.0 && c >= n,
            format!("male 200+200: neutral {n:.2} >= 90, contrary {c:.2} >= neutral"),
            format!("male 200+200: neutral {n:.2} (need >= 90), contrary {c:.2} (need >= neutral)"),
        ),
        Err(e) => Outcome::Fail(format!("could not run: {e:#}")),
    }
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 6] = [
        ("engine invariants", engine_invariants),
        ("scoring trace", scoring_trace),
        ("rates oracle", rates_oracle),
        ("gain reproduction", gain_reproduction),
        ("decision rule", decision_grid),
        ("male accuracy on CelebA (extended)", extended_male),
    ];
    let mut failed = 0;
    println!();
    for (name, f) in checks {
        let (tag, detail) = match f() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag}  {name}: {detail}");
    }
    println!();
    if failed > 0 {
        std::process::exit(1);
    }
}
