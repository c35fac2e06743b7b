use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hybridcomp_expcli::{
    aggregate_file, provenance, run_scenario, write_results, ExpConfig, RunOptions, Scenario, ScenarioKind, Scheme,
};

#[derive(Parser)]
#[command(name = "hybridcomp", version, about = "Run and summarize hybrid computing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write per-trial results.
    Run {
        /// convergence, vs_n, vs_ue_power, vs_es_power, vs_ue_deviation,
        /// vs_es_deviation, vs_offloading_only or vs_single_tier.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Trials per sweep point (default 20, or 1 for convergence).
        #[arg(long)]
        trials: Option<usize>,
        /// Seed of the first trial; trial i uses seed + i.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a configuration entry, e.g. `system.n=20`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Replace the sweep grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Replace the scheme list.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// Record wall time per trial.
        #[arg(long)]
        timing: bool,
    },
    /// Summarize a result file per scenario, scheme and sweep value.
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { scenario, out, trials, seed, config, overrides, grid, schemes, timing } => {
            let kind: ScenarioKind = scenario.parse()?;
            let cfg = ExpConfig::load(config.as_deref(), &overrides)?;
            let mut sc = Scenario::preset(kind);
            if let Some(t) = trials {
                sc.trials = t;
            }
            if let Some(g) = grid {
                sc.grid = g;
            }
            if let Some(s) = schemes {
                sc.schemes = s.iter().map(|x| x.parse::<Scheme>()).collect::<Result<_, _>>()?;
            }
            let opts = RunOptions { base_seed: seed, timing };
            let rows = run_scenario(&sc, &cfg, &opts)?;
            write_results(&out, &provenance(&sc, &cfg, &opts), &rows)
                .with_context(|| format!("writing {}", out.display()))?;
            let failed = rows.iter().filter(|r| r.status != hybridcomp_expcli::Status::Ok).count();
            log::info!("wrote {} rows to {} ({failed} not ok)", rows.len(), out.display());
        }
        Command::Aggregate { input, out } => {
            let summary = aggregate_file(&input, &out)?;
            log::info!("wrote {} groups to {}", summary.len(), out.display());
        }
    }
    Ok(())
}
