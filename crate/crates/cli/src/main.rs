use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use urnflow_cli::commands::{self, Report, RunOptions};
use urnflow_cli::config::{ExperimentConfig, RunConfig};
use urnflow_cli::verify::{select, Verifier, VerifyOptions};
use urnflow_cli::CliError;

#[derive(Parser)]
#[command(
    name = "urnflow",
    version,
    about = "Urn process simulation, mean-limit flows and acceptance checks"
)]
struct Cli {
    /// Override the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles.
    #[arg(short = 'j', long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Keep every n-th row of paths and flows.
    #[arg(long, global = true)]
    thin: Option<u64>,
    #[arg(long, env = "URNFLOW_OUT", hide = true)]
    env_out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one urn path.
    Simulate { config: PathBuf },
    /// Integrate the mean-limit flow.
    Ode { config: PathBuf },
    /// Run a replicate ensemble.
    Ensemble { config: PathBuf },
    /// Equilibria, permanence and orbit analysis.
    Analyze { config: PathBuf },
    /// Run whatever `run.mode` of the config asks for.
    Run { config: PathBuf },
    /// Run acceptance criteria: `all`, a group, criterion names or numbers,
    /// or a config file with `run.mode = verify`.
    Verify {
        targets: Vec<String>,
        #[arg(long, hide = true)]
        tamper_drift: bool,
    },
}

fn load_mode(path: &Path, mode: &str) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    if cfg.run.mode() != mode {
        return Err(CliError::Config(format!(
            "{}: run.mode is `{}`, expected `{mode}`",
            path.display(),
            cfg.run.mode()
        )));
    }
    Ok(cfg)
}

fn print_report(report: &Report) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for line in &report.lines {
        println!("{line}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
}

fn verify(targets: &[String], opts: &RunOptions, tamper_drift: bool) -> Result<(), CliError> {
    let mut names = Vec::new();
    for t in targets {
        if t.ends_with(".json") {
            match ExperimentConfig::load(Path::new(t))?.run {
                RunConfig::Verify { targets } => names.extend(targets),
                other => {
                    return Err(CliError::Config(format!(
                        "{t}: run.mode is `{}`, expected `verify`",
                        other.mode()
                    )))
                }
            }
        } else {
            names.push(t.clone());
        }
    }
    let ids = select(&names)?;
    let verifier = Verifier::new(VerifyOptions {
        jobs: opts.jobs.max(1),
        tamper_drift,
    });
    let mut failed = Vec::new();
    let stdout = std::io::stdout();
    for id in ids {
        let r = verifier.run(id);
        let mut lock = stdout.lock();
        writeln!(lock, "{}", r.line())?;
        lock.flush()?;
        if !r.passed {
            failed.push(format!("{} {}", r.id, r.name));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerificationFailed(failed))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let opts = RunOptions {
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out,
        env_out: cli.env_out,
        thin: cli.thin,
    };
    let report = match &cli.command {
        Command::Simulate { config } => commands::cmd_simulate(&load_mode(config, "simulate")?, &opts)?,
        Command::Ode { config } => commands::cmd_ode(&load_mode(config, "ode")?, &opts)?,
        Command::Ensemble { config } => commands::cmd_ensemble(&load_mode(config, "ensemble")?, &opts)?,
        Command::Analyze { config } => commands::cmd_analyze(&load_mode(config, "analyze")?, &opts)?,
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            if let RunConfig::Verify { targets } = &cfg.run {
                return verify(targets, &opts, false);
            }
            commands::run(&cfg, &opts)?
        }
        Command::Verify { targets, tamper_drift } => return verify(targets, &opts, *tamper_drift),
    };
    print_report(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
