use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairprobe::ExperimentKind;
use fairprobe_cli::{
    cmd_all, cmd_analyze, cmd_label, cmd_plan, cmd_report, cmd_run, AuditConfig, BackendKind,
    CliError, OutputPaths, Overrides, RunOutcome,
};

/// Bias audits for generative language models.
#[derive(Debug, Parser)]
#[command(name = "fairprobe", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for the mock backend and embedding training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print rendered prompts instead of running them.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Number of prompts shown by --dry-run.
    #[arg(long, global = true, default_value_t = 5)]
    preview: usize,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand the experiment into plan.jsonl.
    Plan {
        #[arg(long)]
        kind: Option<ExperimentKind>,
        #[arg(long)]
        replicates: Option<u32>,
    },
    /// Execute a plan into records.jsonl.
    Run {
        /// Plan file (defaults to <out-dir>/plan.jsonl).
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Categorize records into labeled.jsonl.
    Label {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Compute metrics and write the report files.
    Analyze {
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// word2vec text file used instead of training embeddings.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Re-render Markdown and CSV from report.json.
    Report {
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run plan, run, label and analyze in sequence.
    All {
        #[arg(long)]
        kind: Option<ExperimentKind>,
        #[arg(long)]
        replicates: Option<u32>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (kind, replicates) = match &cli.command {
        Command::Plan { kind, replicates } | Command::All { kind, replicates } => {
            (*kind, *replicates)
        }
        _ => (None, None),
    };
    let overrides = Overrides {
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
        backend: cli.backend,
        kind,
        replicates,
    };
    let mut cfg = AuditConfig::resolve(
        cli.config.as_deref(),
        &|k| std::env::var(k).ok(),
        &overrides,
    )?;
    if let Command::Analyze {
        embeddings: Some(path),
        ..
    } = &cli.command
    {
        if !path.is_file() {
            return Err(CliError::FileNotFound(path.clone()));
        }
        cfg.data.embeddings = Some(path.clone());
    }
    let paths = OutputPaths::new(&cfg.out_dir);
    let dry_run = cli.dry_run.then_some(cli.preview);
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Plan { .. } => {
            let p = cmd_plan(&cfg)?;
            println!(
                "{} trials ({}) -> {}",
                p.trials,
                p.plan_id,
                p.path.display()
            );
        }
        Command::Run { plan } => {
            let plan = plan.unwrap_or(paths.plan);
            report_run(cmd_run(&cfg, &plan, dry_run, &mut stdout)?);
        }
        Command::Label { records } => {
            let (path, s) = cmd_label(&cfg, &records.unwrap_or(paths.records))?;
            println!(
                "{} records, {} resolved, {} unresolved ({} failed) -> {}",
                s.total,
                s.resolved,
                s.unresolved,
                s.failed,
                path.display()
            );
        }
        Command::Analyze { labeled, .. } => {
            let out = cmd_analyze(&cfg, &labeled.unwrap_or(paths.labeled))?;
            for f in out.files {
                println!("{}", f.display());
            }
        }
        Command::Report { report } => {
            for f in cmd_report(&cfg, &report.unwrap_or(paths.report_json))? {
                println!("{}", f.display());
            }
        }
        Command::All { .. } => {
            let out = cmd_all(&cfg, dry_run, &mut stdout)?;
            println!(
                "{} trials ({}) -> {}",
                out.plan.trials,
                out.plan.plan_id,
                out.plan.path.display()
            );
            report_run(out.run);
            if let Some(a) = out.analysis {
                for f in a.files {
                    println!("{}", f.display());
                }
            }
        }
    }
    Ok(())
}

fn report_run(outcome: RunOutcome) {
    match outcome {
        RunOutcome::Preview { shown } => eprintln!("dry run: {shown} prompts shown, nothing sent"),
        RunOutcome::Completed { path, summary } => println!(
            "{} trials, {} failed, {} retries -> {}",
            summary.total,
            summary.failed,
            summary.retries,
            path.display()
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
