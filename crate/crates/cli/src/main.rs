//! `triage`: build a CVE dataset, export fine-tune files, run CWE/severity
//! inference and evaluate it.
//!
//! Settings resolve as flags, then `TRIAGE_*` environment variables, then
//! the `--config` TOML file, then built-in defaults.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::warn;

use triage_core::cvss::Distance;
use triage_core::dataset::load_dataset;
use triage_core::inference::ProviderKind;
use triage_core::model::{PromptVariant, TaskKind};
use triage_core::pipeline::{self, PipelineConfig};

#[derive(Parser)]
#[command(name = "triage", version, about = "CVE dataset building, CWE/severity inference and evaluation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "TRIAGE_CONFIG")]
    config: Option<PathBuf>,
    /// Records with commits on or before this date are discarded (YYYY-MM-DD).
    #[arg(long, global = true, env = "TRIAGE_CUTOFF_DATE")]
    cutoff_date: Option<NaiveDate>,
    /// Keep records committed after the cutoff (false keeps those before).
    #[arg(long, global = true, env = "TRIAGE_KEEP_AFTER_CUTOFF")]
    keep_after_cutoff: Option<bool>,
    /// Prompt token budget.
    #[arg(long, global = true, env = "TRIAGE_TOKEN_LIMIT")]
    token_limit: Option<usize>,
    /// Comma-separated prompt variants, e.g. DESCRIPTION,DESCRIPTION_METHODS.
    #[arg(long, global = true, env = "TRIAGE_VARIANTS", value_delimiter = ',')]
    variants: Option<Vec<PromptVariant>>,
    /// Comma-separated score distances, e.g. 0.5,1.0,1.5.
    #[arg(long, global = true, env = "TRIAGE_DISTANCES", value_delimiter = ',')]
    distances: Option<Vec<Distance>>,
    #[arg(long, global = true, env = "TRIAGE_PROVIDER")]
    provider: Option<ProviderKind>,
    /// Evaluate right after inference.
    #[arg(long, global = true, env = "TRIAGE_EVALUATE")]
    evaluate: Option<bool>,
    #[arg(long, global = true, env = "TRIAGE_SEED")]
    seed: Option<u64>,
    /// Redo inference for results that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Run inference on this many sampled evaluation records.
    #[arg(long, global = true, env = "TRIAGE_SAMPLE")]
    sample: Option<usize>,
    #[arg(long, global = true, env = "TRIAGE_DATASET_DIR")]
    dataset_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "TRIAGE_RESULTS_DIR")]
    results_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "TRIAGE_REPORTS_DIR")]
    reports_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "TRIAGE_FINETUNE_DIR")]
    finetune_dir: Option<PathBuf>,
    /// Mock answers file (JSON) for --provider mock.
    #[arg(long, global = true, env = "TRIAGE_MOCK_FIXTURES")]
    mock_fixtures: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest NVD feeds, fetch fix commits, filter and split.
    BuildDataset {
        /// NVD JSON feed (repeatable).
        #[arg(long = "feed", required = true)]
        feeds: Vec<PathBuf>,
        /// CVE2CWE ground-truth JSON.
        #[arg(long)]
        cve2cwe: PathBuf,
        /// Replay recorded commits from this directory instead of the network.
        #[arg(long)]
        commit_fixtures: Option<PathBuf>,
    },
    /// Write fine-tune train/test JSONL for one task.
    ExportFinetune {
        #[arg(long)]
        task: TaskKind,
    },
    /// Run CWE and severity inference over the evaluation split.
    Infer,
    /// Recompute verdicts from raw results and write the report bundle.
    Evaluate,
    /// Print the tables of an existing report bundle.
    Report,
    /// Print the resolved configuration as TOML.
    Config,
}

fn set_if(value: Option<bool>, target: &mut bool) {
    if let Some(v) = value {
        *target = v;
    }
}

fn resolve(args: &GlobalArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = args.cutoff_date {
        config.filter.cutoff_date = d;
    }
    set_if(args.keep_after_cutoff, &mut config.filter.keep_after_cutoff);
    set_if(args.evaluate, &mut config.evaluate);
    if let Some(n) = args.token_limit {
        config.filter.token_limit = n;
    }
    if let Some(v) = &args.variants {
        config.variants = v.clone();
    }
    if let Some(d) = &args.distances {
        config.distances = d.clone();
    }
    if let Some(p) = args.provider {
        config.provider.kind = p;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.sample.is_some() {
        config.sample = args.sample;
    }
    let paths = &mut config.paths;
    for (flag, slot) in [
        (&args.dataset_dir, &mut paths.dataset_dir),
        (&args.results_dir, &mut paths.results_dir),
        (&args.reports_dir, &mut paths.reports_dir),
        (&args.finetune_dir, &mut paths.finetune_dir),
    ] {
        if let Some(p) = flag {
            slot.clone_from(p);
        }
    }
    if args.mock_fixtures.is_some() {
        config.provider.mock_fixtures.clone_from(&args.mock_fixtures);
    }
    config.validate()?;
    Ok(config)
}

enum Status {
    Ok,
    Partial,
}

fn evaluate(config: &PipelineConfig) -> Result<()> {
    let summary = pipeline::cmd_evaluate(config)?;
    println!(
        "evaluated {} accuracy cells; report written to {}",
        summary.reports.len(),
        config.paths.reports_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<Status> {
    let mut config = resolve(&cli.global)?;
    match cli.command {
        Command::BuildDataset {
            feeds,
            cve2cwe,
            commit_fixtures,
        } => {
            if commit_fixtures.is_some() {
                config.commits.fixtures_dir = commit_fixtures;
            }
            let client = pipeline::commit_client(&config.commits)?;
            let s = pipeline::cmd_build_dataset(&feeds, &cve2cwe, &config, client.as_ref())?;
            println!(
                "{} entries: {} passed ({} evaluation, {} fine-tune), {} discarded",
                s.input, s.passed, s.evaluation, s.finetune, s.discarded
            );
            for (reason, n) in &s.discard_reasons {
                println!("  {reason}: {n}");
            }
            if s.input == 0 {
                warn!("no CVE entries in the given feeds");
                return Ok(Status::Partial);
            }
        }
        Command::ExportFinetune { task } => {
            let m = pipeline::cmd_export_finetune(&config, task)?;
            println!(
                "{task}: {} records ({} train / {} test), {} examples prepared, {} over the token limit, {} without code",
                m.records.train + m.records.test,
                m.records.train,
                m.records.test,
                m.prepared_examples,
                m.token_filtered,
                m.missing_granularity
            );
            println!("examples: {} train / {} test", m.examples.train, m.examples.test);
            for (variant, c) in &m.per_variant {
                println!("  {variant}: {} train / {} test", c.train, c.test);
            }
        }
        Command::Infer => {
            let dataset = load_dataset(&config.paths.dataset_dir)?;
            let provider = pipeline::make_provider(&config, &dataset)?;
            drop(dataset);
            let s = pipeline::cmd_infer(&config, provider.as_ref(), cli.global.force)?;
            println!(
                "{} records: {} pairs attempted, {} written, {} already done, {} excluded, {} with errors",
                s.records, s.attempted, s.written, s.resumed, s.excluded, s.with_errors
            );
            if s.attempted > 0 && s.failed == s.attempted {
                bail!("every inference failed");
            }
            if config.evaluate {
                evaluate(&config)?;
            }
            if s.with_errors > 0 {
                return Ok(Status::Partial);
            }
        }
        Command::Evaluate => evaluate(&config)?,
        Command::Report => print!("{}", pipeline::cmd_report(&config)?),
        Command::Config => print!("{}", toml::to_string(&config)?),
    }
    Ok(Status::Ok)
}

/// The error chain, skipping causes already quoted by their parent.
fn chain(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(1)
        }
    }
}
