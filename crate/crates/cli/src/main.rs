use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kvqa_core::pipeline::{artifacts, convert_okvqa, run_pipeline, run_stage, RunConfig, Stage};
use kvqa_core::Error;

/// Answer-guided knowledge retrieval and answer validation pipeline.
#[derive(Debug, Parser)]
#[command(name = "kvqa", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Serve knowledge from the cache only; a miss is an error.
    #[arg(long, global = true)]
    offline: bool,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Sentences kept per query and source.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Queries per noun phrase.
    #[arg(long, global = true)]
    k_queries: Option<usize>,
    #[arg(long, global = true)]
    recall_threshold: Option<f64>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the dataset and attach base-scorer candidates.
    Ingest,
    /// Noun phrases, object links, search queries and statements.
    Extract,
    /// Knowledge pools, query matching and visual knowledge.
    Retrieve,
    /// Encoder outputs and knowledge features.
    Embed,
    /// Train the validation model and write a checkpoint.
    Train,
    /// Decisions for the evaluation split.
    Validate,
    /// Mean soft score of the decisions.
    Evaluate,
    /// Write report.json and report.md.
    Report,
    /// Run every stage listed in the configuration.
    Run,
    /// Convert raw OK-VQA question and annotation files to a dataset file.
    ConvertOkvqa {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Objects file per image; `{image_id}` is substituted.
        #[arg(long, default_value = "objects/{image_id}.json")]
        objects_template: String,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => 1,
        Error::ExcessiveFailures { .. } => 3,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> kvqa_core::Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config).map_err(|e| match e {
        Error::Io { path, source } => {
            Error::Config(format!("cannot read {}: {source}", path.display()))
        }
        other => other,
    })?;
    let cwd = std::env::current_dir().unwrap_or_default();
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.offline {
        cfg.retrieval.offline = true;
    }
    if let Some(d) = &cli.cache_dir {
        cfg.retrieval.cache_dir = cwd.join(d);
    }
    if let Some(d) = &cli.work_dir {
        cfg.work_dir = cwd.join(d);
    }
    if let Some(m) = cli.m {
        cfg.retrieval.m = m;
    }
    if let Some(k) = cli.k_queries {
        cfg.retrieval.k_queries = k;
    }
    if let Some(t) = cli.recall_threshold {
        cfg.retrieval.recall_threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> kvqa_core::Result<()> {
    if let Command::ConvertOkvqa {
        questions,
        annotations,
        objects_template,
        split,
        output,
    } = &cli.command
    {
        let file = convert_okvqa(questions, annotations, objects_template, split.as_deref())?;
        artifacts::write_json(output, &file)?;
        println!(
            "wrote {} questions to {}",
            file.questions.len(),
            output.display()
        );
        return Ok(());
    }
    let cfg = load_config(cli)?;
    let stage = match &cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Extract => Stage::Extract,
        Command::Retrieve => Stage::Retrieve,
        Command::Embed => Stage::Embed,
        Command::Train => Stage::Train,
        Command::Validate => Stage::Validate,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
        Command::Run => {
            let summary = run_pipeline(&cfg)?;
            for o in &summary.outcomes {
                println!(
                    "{}: {}/{} questions",
                    o.stage.as_str(),
                    o.succeeded,
                    o.attempted
                );
            }
            if let Some(eval) = summary.evaluation {
                println!("mean soft score: {:.4}", eval.mean_soft_score);
            }
            return Ok(());
        }
        Command::ConvertOkvqa { .. } => unreachable!("handled above"),
    };
    let outcome = run_stage(&cfg, stage)?;
    println!(
        "{}: {}/{} questions",
        stage.as_str(),
        outcome.succeeded,
        outcome.attempted
    );
    match stage {
        Stage::Evaluate => {
            let eval: kvqa_core::pipeline::Evaluation =
                artifacts::read_json(&cfg.work_path(artifacts::EVALUATION))?;
            println!("mean soft score: {:.4}", eval.mean_soft_score);
        }
        Stage::Report => {
            let md = std::fs::read_to_string(cfg.work_path(artifacts::REPORT_MD)).map_err(|e| {
                Error::Io {
                    path: cfg.work_path(artifacts::REPORT_MD),
                    source: e,
                }
            })?;
            print!("{md}");
        }
        _ => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
