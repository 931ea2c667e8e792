use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homcarl_cli::experiments::{run_carleson, run_cell, run_convergence, run_dkp, run_pipeline};
use homcarl_cli::{CliError, CliResult, ExperimentConfig, RunContext};

#[derive(Parser)]
#[command(
    name = "homcarl",
    version,
    about = "Homogenization and Carleson-functional experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single worker thread, so every reduction runs in a fixed order.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and cache the cell problems, write Abar.json.
    Cell(Common),
    /// Full run: coefficients, solves, Carleson, DKP and budget reports.
    Pipeline(Common),
    /// 1-D oracle error curves and the strip rate table.
    Convergence(Common),
    /// Carleson reports of u and ū.
    Carleson(Common),
    /// DKP oscillation integral and its depth sweep.
    Dkp(Common),
}

fn context(c: &Common) -> CliResult<RunContext> {
    if c.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let cfg = ExperimentConfig::load(&c.config)?;
    RunContext::new(cfg, c.out.clone(), c.deterministic)
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Cell(c) => {
            let ctx = context(c)?;
            let run = run_cell(&ctx)?;
            let mut m = ctx.manifest("cell")?;
            m.cache_keys = run.cache_keys;
            m.files = vec!["Abar.json".into()];
            m.write(&ctx.out)?;
        }
        Command::Pipeline(c) => {
            let run = run_pipeline(&context(c)?)?;
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
        }
        Command::Convergence(c) => {
            let s = run_convergence(&context(c)?)?;
            println!(
                "oracle slopes {:?}, strip rate {:.3}",
                s.oracle_slopes, s.strip_rate
            );
        }
        Command::Carleson(c) => {
            let s = run_carleson(&context(c)?)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Dkp(c) => {
            let s = run_dkp(&context(c)?)?;
            println!("total {:e}, sweep {:?}", s.report.total, s.sweep);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
