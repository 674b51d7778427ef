//! Command-line entry point: `fve <subcommand> --config <path> [--seed N]
//! [--reps N] [--out DIR]`. Exit codes: 0 ok, 1 run or acceptance failure,
//! 2 usage/config error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Experiment, RunConfig};
use crate::error::Error;
use crate::run::{diagnose, run, Overrides};
use crate::verify::{run_suite, Params};

#[derive(Parser)]
#[command(name = "fve", version, about = "Simulation laboratory for measure-valued diffusions in a random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override ensemble.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override ensemble.n_reps.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory for summary.json / trajectories.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Lookdown particle ensemble.
    Lookdown(CommonArgs),
    /// Moran particle ensemble.
    Moran(CommonArgs),
    /// Dual (death-chain) moment estimates.
    Dual(CommonArgs),
    /// Density-field solver ensemble.
    Spde(CommonArgs),
    /// Branching system, optionally mass-conditioned.
    Sdsm(CommonArgs),
    /// Atom reports from a trajectory CSV.
    Diagnose(CommonArgs),
    /// Run a verification suite.
    Verify(CommonArgs),
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn load(args: &CommonArgs, experiment: Experiment) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if cfg.experiment != experiment {
        // the subcommand decides the experiment; revalidate under it
        cfg.experiment = experiment;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run_ensemble(args: &CommonArgs, experiment: Experiment) -> Result<(), Error> {
    let cfg = load(args, experiment)?;
    let overrides = Overrides {
        seed: args.seed,
        reps: args.reps,
        out: args.out.clone(),
    };
    let res = run(&cfg, &overrides)?;
    println!("{}", crate::run::summary_json(&res));
    Ok(())
}

pub fn cli_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, bad arguments are usage errors
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome: Result<i32, Error> = (|| match &cli.command {
        Command::Lookdown(a) => run_ensemble(a, Experiment::Lookdown).map(|_| 0),
        Command::Moran(a) => run_ensemble(a, Experiment::Moran).map(|_| 0),
        Command::Dual(a) => run_ensemble(a, Experiment::Dual).map(|_| 0),
        Command::Spde(a) => run_ensemble(a, Experiment::Spde).map(|_| 0),
        Command::Sdsm(a) => run_ensemble(a, Experiment::Sdsm).map(|_| 0),
        Command::Diagnose(a) => {
            let cfg = load(a, Experiment::Diagnose)?;
            let json = diagnose(&cfg)?;
            if let Some(dir) = a.out.as_deref().or(cfg.output.dir.as_deref().map(std::path::Path::new)) {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("diagnostics.json"), &json)?;
            }
            println!("{json}");
            Ok(0)
        }
        Command::Verify(a) => {
            let cfg = load(a, Experiment::Verify)?;
            let suite = cfg.model.suite.clone().unwrap_or_else(|| "all".into());
            let params = Params {
                master_seed: a.seed.unwrap_or(cfg.ensemble.master_seed),
                reps: a.reps,
            };
            let results = run_suite(&suite, params)?;
            let mut failed = false;
            for c in &results {
                println!("{}", c.line());
                failed |= !c.pass;
            }
            Ok(if failed { 1 } else { 0 })
        }
    })();
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
