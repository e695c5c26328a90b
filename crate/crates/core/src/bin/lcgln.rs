use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use lcgln::harness::{self, ExperimentConfig, ReportFormat};
use lcgln::problems::ProblemKind;
use lcgln::train::Method;

/// Run decision-focused learning experiment grids and report on them.
#[derive(Parser)]
#[command(name = "lcgln", version)]
struct Cli {
    /// Print the known problem tags and exit.
    #[arg(long)]
    list_problems: bool,
    /// Print the known method tags and exit.
    #[arg(long)]
    list_methods: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) every cell of an experiment grid.
    Run(RunArgs),
    /// Summarize a results file into a table or a plot.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    problem: Option<String>,
    /// Method tags, comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Samples per instance, comma separated.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Fake-target counts, comma separated (budget only).
    #[arg(long, value_delimiter = ',')]
    fakes: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = "table")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: &RunArgs) -> lcgln::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(p) = &args.problem {
        cfg.problem = p.clone();
    }
    if let Some(m) = &args.method {
        cfg.methods = m.clone();
    }
    if let Some(k) = &args.samples {
        cfg.samples = k.clone();
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(f) = &args.fakes {
        cfg.fakes = f.clone();
    }
    if let Some(o) = &args.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> ExitCode {
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match cfg.echo() {
        Ok(text) => println!("# effective configuration\n{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match harness::run_experiment(&cfg) {
        Ok(results) => {
            let failed = results.iter().filter(|r| !r.is_ok()).count();
            println!(
                "{} runs, {failed} failed; results in {}",
                results.len(),
                harness::run::results_path(&cfg).display()
            );
            if failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn report(args: &ReportArgs) -> ExitCode {
    let outcome = args.format.parse::<ReportFormat>().and_then(|format| {
        let results = harness::read_results(&args.results)?;
        let summaries = harness::summarize(&results);
        harness::emit_report(&summaries, format, &args.out)
    });
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.list_problems || cli.list_methods {
        if cli.list_problems {
            ProblemKind::ALL.iter().for_each(|p| println!("{}", p.as_str()));
        }
        if cli.list_methods {
            Method::ALL.iter().for_each(|m| println!("{m}"));
        }
        return ExitCode::SUCCESS;
    }
    match &cli.command {
        Some(Command::Run(args)) => run(args),
        Some(Command::Report(args)) => report(args),
        None => {
            eprintln!("error: expected a subcommand (run or report); see --help");
            ExitCode::from(1)
        }
    }
}
