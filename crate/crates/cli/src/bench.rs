//! The `bench` subcommand: score prompt methods against annotated faces.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use guesswho_core::benchmark::{
    compare_methods, comparison_rows, emit_report, evaluate_catalog, evaluate_prompt_pair_with,
    parse_attr_file, select_eval_subset, AttributeTable, EvalResult, ReportFormat, ReportRow,
};
use guesswho_core::catalog::Method;
use guesswho_core::{Catalog, EncoderBackend, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodChoice {
    Neutral,
    Contrary,
    /// Both methods on the attributes with a contrary pair, with the gain.
    Both,
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub method: MethodChoice,
    pub cap: usize,
    pub format: ReportFormat,
    pub exec: Execution,
    /// Questions for the contrary method; the bundled catalog when absent.
    pub catalog: Option<PathBuf>,
    /// Neutral prompts; the bundled list when absent.
    pub neutral_catalog: Option<PathBuf>,
}

pub fn load_table(path: &Path) -> anyhow::Result<AttributeTable> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_attr_file(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn load_catalog(path: Option<&Path>, shipped: fn() -> Catalog) -> anyhow::Result<Catalog> {
    match path {
        Some(p) => Catalog::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(shipped()),
    }
}

/// Evaluate and return the report rows.
pub fn run<B: EncoderBackend + ?Sized>(
    plan: &BenchPlan,
    backend: &B,
    table: &AttributeTable,
    image_root: &Path,
) -> anyhow::Result<Vec<ReportRow>> {
    let neutral = load_catalog(plan.neutral_catalog.as_deref(), Catalog::shipped_neutral)?;
    let contrary = load_catalog(plan.catalog.as_deref(), Catalog::shipped)?;
    let eval = |catalog: &Catalog, method| -> anyhow::Result<Vec<EvalResult>> {
        Ok(evaluate_catalog(backend, table, image_root, catalog, Some(method), plan.cap, plan.exec)?)
    };
    let rows = match plan.method {
        MethodChoice::Neutral => eval(&neutral, Method::Neutral)?.iter().map(ReportRow::from_eval).collect(),
        MethodChoice::Contrary => eval(&contrary, Method::Contrary)?.iter().map(ReportRow::from_eval).collect(),
        MethodChoice::Both => {
            let contrary_results = eval(&contrary, Method::Contrary)?;
            if contrary_results.is_empty() {
                bail!("the catalog has no contrary pairs to compare");
            }
            let mut neutral_results = Vec::with_capacity(contrary_results.len());
            for r in &contrary_results {
                let entry = neutral.entry(&r.attribute)?;
                let subset = select_eval_subset(table, &r.attribute, plan.cap)?.rooted(image_root);
                neutral_results.push(evaluate_prompt_pair_with(backend, &subset, &entry.pair, plan.exec)?);
            }
            let comparisons = compare_methods(&neutral_results, &contrary_results)?;
            comparison_rows(&contrary_results, &comparisons)?
        }
    };
    Ok(rows)
}

pub fn render(plan: &BenchPlan, rows: &[ReportRow]) -> String {
    emit_report(rows, plan.format)
}
