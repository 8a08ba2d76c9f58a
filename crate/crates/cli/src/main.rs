use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use guesswho_cli::bench::{self, BenchPlan, MethodChoice};
use guesswho_cli::play::{self, HttpApi};
use guesswho_clip::{OnnxClipBackend, OnnxClipConfig, DEFAULT_LOGIT_SCALE};
use guesswho_core::benchmark::{ReportFormat, DEFAULT_CAP};
use guesswho_core::classifier::{EmbeddingCache, FixtureBackend, PromptIndex};
use guesswho_core::{Catalog, EncoderBackend, Execution};
use guesswho_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "guesswho", version, about = "Guess who? with zero-shot CLIP classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the game server.
    Serve {
        /// TOML config; GUESSWHO_* variables override its fields.
        #[arg(long, default_value = "guesswho.toml")]
        config: PathBuf,
    },
    /// Score prompt methods on CelebA-style annotations.
    Bench(BenchArgs),
    /// Play in the terminal against a running server.
    Play {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
        /// Fix the board and the winner.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Attribute annotation file (list_attr_celeba.txt layout).
    #[arg(long)]
    attrs: PathBuf,
    /// Directory the annotated filenames are relative to.
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodChoice,
    /// Positives and negatives used per attribute.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Question catalog for the contrary method.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Prompt list for the neutral method.
    #[arg(long)]
    neutral_catalog: Option<PathBuf>,
    /// ONNX image encoder. Without model paths the annotations themselves
    /// answer, which checks the harness rather than a model.
    #[arg(long, requires = "text_model")]
    image_model: Option<PathBuf>,
    #[arg(long, requires = "image_model")]
    text_model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LOGIT_SCALE)]
    logit_scale: f64,
    /// Classify on one thread.
    #[arg(long)]
    sequential: bool,
}

fn bench_command(args: BenchArgs) -> anyhow::Result<()> {
    let table = bench::load_table(&args.attrs)?;
    let backend: Arc<dyn EncoderBackend> = match (&args.image_model, &args.text_model) {
        (Some(image), Some(text)) => {
            let mut config = OnnxClipConfig::new(image, text);
            config.logit_scale = args.logit_scale;
            Arc::new(OnnxClipBackend::load(&config)?)
        }
        _ => {
            eprintln!("no model given: answering from the annotations (harness check)");
            let prompts = PromptIndex::from_catalogs(&[&Catalog::shipped(), &Catalog::shipped_neutral()])?;
            Arc::new(FixtureBackend::from_table(&table, prompts)?)
        }
    };
    let plan = BenchPlan {
        method: args.method,
        cap: args.cap,
        format: args.format,
        exec: if args.sequential { Execution::Sequential } else { Execution::default() },
        catalog: args.catalog,
        neutral_catalog: args.neutral_catalog,
    };
    let cached = EmbeddingCache::new(backend);
    let rows = bench::run(&plan, &cached, &table, &args.images)?;
    let report = bench::render(&plan, &rows);
    match &args.out {
        Some(path) => std::fs::write(path, report).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{report}"),
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            tokio::runtime::Runtime::new()?
                .block_on(guesswho_service::serve(config))
                .map_err(|e| anyhow::anyhow!(e))
        }
        Command::Bench(args) => bench_command(args),
        Command::Play { server, seed } => {
            let stdin = std::io::stdin();
            play::run(&HttpApi::new(&server), stdin.lock(), std::io::stdout(), seed)
        }
    }
}
