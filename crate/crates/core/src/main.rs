use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sample_select::decoder::Method;
use sample_select::runner::{self, Overrides, Pipeline, RunConfig, RunnerError};

#[derive(Parser)]
#[command(name = "sample-select", version, about = "Sentence-level Sample & Select summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize every record of a JSONL dataset.
    Run(Box<RunArgs>),
    /// Rescore the rounds of a run output file and report mismatches.
    Replay {
        /// Output file written by `run`.
        trace: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSONL file with `id`, `article` and optional `reference` per line.
    #[arg(long)]
    dataset: PathBuf,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write one JSON line per document.
    #[arg(long)]
    output: PathBuf,
    /// Aggregate report path (defaults to `<output>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long)]
    parse_url: Option<String>,
    #[arg(long)]
    max_sentence_tokens: Option<usize>,
    #[arg(long)]
    max_sentences: Option<usize>,
    /// File whose contents replace the prompt template.
    #[arg(long)]
    prompt_template_file: Option<PathBuf>,
    /// Documents processed concurrently.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
}

fn default_report_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    output.with_file_name(name)
}

fn run(args: RunArgs) -> Result<ExitCode, RunnerError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let prompt_template = match &args.prompt_template_file {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
            RunnerError::Usage(format!("cannot read prompt template {}: {e}", path.display()))
        })?),
        None => None,
    };
    Overrides {
        method: args.method,
        n: args.n,
        top_p: args.top_p,
        temperature: args.temperature,
        seed: args.seed,
        backend_url: args.backend_url,
        parse_url: args.parse_url,
        max_sentence_tokens: args.max_sentence_tokens,
        max_sentences: args.max_sentences,
        prompt_template,
        workers: args.workers,
        timeout_secs: args.timeout_secs,
        retries: args.retries,
    }
    .apply(&mut cfg);

    let records = runner::read_dataset(&args.dataset)?;
    let pipeline = Pipeline::from_config(&cfg)?;
    let report_path = args.report.unwrap_or_else(|| default_report_path(&args.output));
    let summary = runner::run(&records, &pipeline, &args.output, &report_path)?;
    log::info!("{} documents, {} failed", summary.documents, summary.failed);
    Ok(if summary.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn replay(trace: &Path) -> Result<ExitCode, RunnerError> {
    let report = runner::replay(trace)?;
    for m in &report.mismatches {
        println!("mismatch: {m}");
    }
    println!(
        "{} lines, {} rounds checked, {} skipped, {} mismatches",
        report.lines,
        report.rounds_checked,
        report.rounds_skipped,
        report.mismatches.len()
    );
    Ok(if report.mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Replay { trace } => replay(&trace),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
