use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use lext_core::cache::ResponseCache;
use lext_core::config::RunConfig;
use lext_core::context::RedactionMode;
use lext_core::dataset::{augment_qpain, load_items, write_items, DemographicConfig};
use lext_core::pipeline::{evaluate_dataset, RunSummary};
use lext_core::report::{load_runs, write_reports};
use lext_core::types::DatasetKind;
use lext_core::{demo, Error};

/// Scores free-text model explanations for plausibility and faithfulness.
#[derive(Debug, Parser)]
#[command(name = "lext", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the dataset named in a config file.
    Run(RunArgs),
    /// Expand QPain templates into one item per demographic combination.
    Augment(AugmentArgs),
    /// Rebuild reports from existing scorecards.
    Report(ReportArgs),
    /// Check a config file and probe its providers.
    Validate(ValidateArgs),
    /// Score the bundled fixture with scripted providers.
    MockDemo(DemoArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Evaluate only the first N items.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Serve every call from the cache and fail on a miss.
    #[arg(long)]
    offline: bool,
    #[arg(long, value_enum)]
    seq_mode: Option<SeqMode>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// QPain templates as JSON lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Demographic lists as JSON; built-in lists when absent.
    #[arg(long)]
    demographics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report directories to read; runs are merged in the given order.
    #[arg(long = "from", required = true, num_args = 1..)]
    from: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Skip the provider probe.
    #[arg(long)]
    offline: bool,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value = "lext-demo")]
    out: PathBuf,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    offline: bool,
    #[arg(long, value_enum, default_value = "remove-one")]
    seq_mode: SeqMode,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SeqMode {
    RemoveOne,
    AddBack,
}

impl From<SeqMode> for RedactionMode {
    fn from(m: SeqMode) -> Self {
        match m {
            SeqMode::RemoveOne => RedactionMode::RemoveOne,
            SeqMode::AddBack => RedactionMode::AddBack,
        }
    }
}

/// Marks failures caused by bad input rather than by the run itself.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let cfg = RunConfig::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn report_written(summary: &RunSummary, out: &Path) -> anyhow::Result<()> {
    let written = write_reports(std::slice::from_ref(summary), out)?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let a = &summary.aggregate;
    println!(
        "{} / {}: items {}  P {}  F {}  T {}{}",
        summary.model,
        summary.dataset,
        a.items,
        fmt(a.plausibility.mean),
        fmt(a.faithfulness.mean),
        fmt(a.lext),
        if summary.degraded { "  (degraded)" } else { "" }
    );
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(n) = args.limit {
        cfg.run.limit = Some(n);
    }
    if let Some(out) = args.out {
        cfg.run.out_dir = out;
    }
    if let Some(dir) = args.cache_dir {
        cfg.run.cache_dir = Some(dir);
    }
    if args.offline {
        cfg.run.offline = true;
    }
    if let Some(m) = args.seq_mode {
        cfg.metrics.redaction_mode = m.into();
    }
    if cfg.run.offline && cfg.run.cache_dir.is_none() {
        return Err(usage("--offline needs a cache directory"));
    }
    let summary = evaluate_dataset(&cfg).map_err(|e| match e {
        Error::Config(_) => usage(e),
        e => e.into(),
    })?;
    report_written(&summary, &cfg.run.out_dir)
}

fn augment(args: AugmentArgs) -> anyhow::Result<()> {
    let cfg = match &args.demographics {
        Some(p) => DemographicConfig::from_file(p).map_err(usage)?,
        None => DemographicConfig::default(),
    };
    let templates = load_items(&args.input, DatasetKind::Qpain)?;
    let mut items = Vec::new();
    for t in &templates {
        items.extend(augment_qpain(t, &cfg)?);
    }
    let file = File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    write_items(&items, BufWriter::new(file))?;
    println!(
        "{} template(s) expanded to {} item(s) in {}",
        templates.len(),
        items.len(),
        args.output.display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    let mut runs = Vec::new();
    for dir in &args.from {
        runs.extend(load_runs(dir).with_context(|| format!("reading {}", dir.display()))?);
    }
    let written = write_reports(&runs, &args.out)?;
    println!("{} run(s) written to {} file(s)", runs.len(), written.len());
    Ok(())
}

fn validate(args: ValidateArgs) -> anyhow::Result<()> {
    let cfg = load_config(&args.config)?;
    let evaluator = lext_core::pipeline::Evaluator::from_config(&cfg).map_err(usage)?;
    if !args.offline {
        evaluator.providers.probe().context("provider probe failed")?;
    }
    println!("{}: ok", args.config.display());
    Ok(())
}

fn mock_demo(args: DemoArgs) -> anyhow::Result<()> {
    let cache = match &args.cache_dir {
        Some(dir) => ResponseCache::on_disk(dir),
        None if args.offline => bail!(Usage("--offline needs --cache-dir".into())),
        None => ResponseCache::in_memory(),
    }
    .offline(args.offline);
    let summary = demo::run(cache, args.seq_mode.into())?;
    report_written(&summary, &args.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Augment(a) => augment(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
        Command::MockDemo(a) => mock_demo(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
