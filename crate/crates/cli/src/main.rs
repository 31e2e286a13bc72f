//! `phrasecraft` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod embed;
mod error;
mod manifest;

use config::Settings;
use error::CliError;
use manifest::{digest_path, RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "phrasecraft", version, about = "Contrastive phrase embeddings, evaluation and phrase-based topic models")]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Cap on worker threads for parallel evaluation.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Where to write the run manifest (default: the output directory, or stderr).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fine-tune a composer on phrase and/or context triplets.
    TrainEmbed(commands::TrainEmbedArgs),
    /// Train a phrase-based neural topic model on a document corpus.
    TrainTopics(commands::TrainTopicsArgs),
    /// Run an evaluation protocol.
    #[command(subcommand)]
    Eval(commands::EvalCommand),
    /// Filter labeled paraphrase pairs so lexical overlap carries no label signal.
    FilterPpdb(commands::FilterArgs),
    /// Nearest neighbors of phrases in a vector file.
    Neighbors(commands::NeighborsArgs),
    /// Lexical diversity of nearest-neighbor lists.
    Diversity(commands::DiversityArgs),
    /// Inspect a trained topic model.
    #[command(subcommand)]
    Topics(commands::TopicsCommand),
    /// Finite-difference checks of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Run every check (the default).
    #[arg(long)]
    all: bool,
    /// Run only the named check.
    #[arg(long, conflicts_with = "all")]
    only: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Embedding dimension of the random instances (at most 16).
    #[arg(long)]
    dim: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    step: Option<f64>,
}

/// What a command hands back for reporting.
pub struct Outcome {
    pub metrics: serde_json::Value,
    /// Human-readable `(label, value)` rows for stderr.
    pub table: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    /// Directory that receives `manifest.json` when no explicit path is given.
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Outcome {
    pub fn new(metrics: serde_json::Value) -> Self {
        Self {
            metrics,
            table: Vec::new(),
            inputs: Vec::new(),
            out_dir: None,
            seed: None,
        }
    }
}

fn command_name(c: &Command) -> String {
    match c {
        Command::TrainEmbed(_) => "train-embed".into(),
        Command::TrainTopics(_) => "train-topics".into(),
        Command::Eval(e) => format!("eval {}", e.name()),
        Command::FilterPpdb(_) => "filter-ppdb".into(),
        Command::Neighbors(_) => "neighbors".into(),
        Command::Diversity(_) => "diversity".into(),
        Command::Topics(t) => format!("topics {}", t.name()),
        Command::Gradcheck(_) => "gradcheck".into(),
    }
}

fn gradcheck(args: &GradcheckArgs, settings: &Settings) -> Result<Outcome, CliError> {
    use phrasecraft::gradcheck::{run_suite, SuiteConfig, DEFAULT_STEP, TOLERANCE};
    let cfg = SuiteConfig {
        seed: settings.seed(args.seed)?,
        dim: settings.get("dim", args.dim, 8)?,
        step: settings.get("step", args.step, DEFAULT_STEP)?,
    };
    let mut results = run_suite(&cfg)?;
    if let Some(name) = &args.only {
        results.retain(|r| &r.name == name);
        if results.is_empty() {
            return Err(CliError::Usage(format!("no gradient check named {name:?}")));
        }
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let mut out = Outcome::new(serde_json::json!({
        "tolerance": TOLERANCE,
        "step": cfg.step,
        "dim": cfg.dim,
        "checks": results,
        "passed": failed.is_empty(),
    }));
    out.table = results
        .iter()
        .map(|r| {
            let mark = if r.passed() { "ok" } else { "FAIL" };
            (r.name.clone(), format!("{:.3e}  ({} params)  {mark}", r.max_rel_error, r.params))
        })
        .collect();
    out.seed = Some(cfg.seed);
    if !failed.is_empty() {
        print_report(&out);
        return Err(CliError::Numeric(format!("gradient checks above tolerance: {}", failed.join(", "))));
    }
    Ok(out)
}

fn dispatch(cli: &Cli, settings: &Settings) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::TrainEmbed(a) => commands::train_embed(a, settings),
        Command::TrainTopics(a) => commands::train_topics(a, settings),
        Command::Eval(e) => commands::eval(e, settings),
        Command::FilterPpdb(a) => commands::filter_ppdb(a, settings),
        Command::Neighbors(a) => commands::neighbors(a, settings),
        Command::Diversity(a) => commands::diversity(a, settings),
        Command::Topics(t) => commands::topics(t, settings),
        Command::Gradcheck(a) => gradcheck(a, settings),
    }
}

fn print_report(out: &Outcome) {
    let width = out.table.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &out.table {
        eprintln!("{k:<width$}  {v}");
    }
    println!("{}", out.metrics);
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let started = Instant::now();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            let _ = e.print();
            return Err(CliError::Usage(e.kind().to_string()));
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let settings = Settings::new(cli.config.as_deref())?;
    let outcome = dispatch(&cli, &settings)?;
    settings.warn_unused();
    print_report(&outcome);

    let mut inputs = Vec::new();
    if let Some(c) = &cli.config {
        inputs.push(digest_path(c)?);
    }
    for p in &outcome.inputs {
        inputs.push(digest_path(p)?);
    }
    let manifest = RunManifest {
        argv,
        command: command_name(&cli.command),
        config: settings.resolved(),
        seed: outcome.seed,
        inputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_secs: started.elapsed().as_secs_f64(),
    };
    match cli.manifest.clone().or_else(|| outcome.out_dir.map(|d| d.join(MANIFEST_FILE))) {
        Some(path) => manifest.write(&path)?,
        None => eprintln!("manifest: {}", serde_json::to_string(&manifest)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phrasecraft: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
