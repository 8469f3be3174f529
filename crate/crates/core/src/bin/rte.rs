use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rte_apnn::experiment::{self, Overrides, RunConfig};
use rte_apnn::plot::{self, PlotKind};
use rte_apnn::Result;

/// APNN workbench for the multiscale radiative transfer equation.
///
/// Log verbosity is read from RTE_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "rte", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to the config's `out_dir`, else `runs/<config stem>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Reference solve, training and artifacts for one epsilon.
    Run(RunArgs),
    /// One run per entry of `epsilons`, plus sweep.csv.
    Sweep(RunArgs),
    /// Render a CSV artifact as SVG.
    Plot {
        csv: PathBuf,
        /// loss | error | profile | field | sweep
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&Overrides { seed: args.seed, iterations: args.iters, out_dir: args.out_dir.clone() });
    let out = cfg.out_dir.clone().unwrap_or_else(|| default_out(&args.config));
    Ok((cfg, out))
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    Path::new("runs").join(stem)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = prepare(&args)?;
            let o = experiment::run(&cfg, &out)?;
            println!("final loss {:.4e}, rel_l2 {:.4e}, artifacts in {}", o.final_loss, o.final_rel_l2, out.display());
        }
        Command::Sweep(args) => {
            let (cfg, out) = prepare(&args)?;
            for r in experiment::sweep(&cfg, &out)? {
                println!("eps {:e}: rel_l2 {:.4e}, loss {:.4e}", r.epsilon, r.rel_l2, r.loss);
            }
            println!("sweep written to {}", out.join("sweep.csv").display());
        }
        Command::Plot { csv, kind, out } => {
            let kind: PlotKind = kind.parse()?;
            plot::plot(&csv, kind, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RTE_LOG", "info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
