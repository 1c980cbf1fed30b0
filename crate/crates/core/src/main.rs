use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use conshad_core::io::{write_summary, write_trace};
use conshad_core::sim::{parse_grid, SweepRow};
use conshad_core::{default_scenario, parse_config, run_scenario, sweep, Algorithm, Scenario};

#[derive(Parser)]
#[command(name = "conshad", version, about = "Cooperative service caching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trace.csv and summary.csv.
    Run {
        /// TOML configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "CONSHAD_OUT_DIR", default_value = "results")]
        out_dir: PathBuf,
        /// Overrides the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// onconshad, single or gibbs; overrides the configured algorithm.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Run every point of a parameter grid and write summary.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Axes as `key=v1,v2;key2=lo..hi`, e.g. `cluster_size=1..6`.
        #[arg(long)]
        grid: String,
        #[arg(long, env = "CONSHAD_OUT_DIR", default_value = "results")]
        out_dir: PathBuf,
    },
}

fn load(config: Option<&Path>) -> anyhow::Result<Scenario> {
    match config {
        Some(path) => parse_config(path).with_context(|| format!("loading {}", path.display())),
        None => Ok(default_scenario()),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            seed,
            algorithm,
        } => {
            let mut scenario = load(config.as_deref())?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            if let Some(name) = algorithm {
                scenario.algorithm = name.parse::<Algorithm>()?;
            }
            let output = run_scenario(&scenario)?;
            create_dir(&out_dir)?;
            write_trace(&output.records, &out_dir.join("trace.csv"))?;
            let row = SweepRow {
                point: 0,
                scenario,
                outcome: Ok(output.summary.clone()),
            };
            write_summary(&[row], &out_dir.join("summary.csv"))?;
            let s = &output.summary;
            println!(
                "{}: T={} avg_total_delay={:.6} avg_caching_cost={:.6} final_queue={:.6}",
                s.algorithm, s.horizon, s.avg_total_delay, s.avg_caching_cost, s.final_queue
            );
        }
        Command::Sweep { config, grid, out_dir } => {
            let template = load(config.as_deref())?;
            let axes = parse_grid(&grid)?;
            let rows = sweep(&template, &axes);
            create_dir(&out_dir)?;
            write_summary(&rows, &out_dir.join("summary.csv"))?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} points, {} failed", rows.len(), failed);
            for r in rows.iter().filter(|r| r.outcome.is_err()) {
                eprintln!("point {}: {}", r.point, r.outcome.as_ref().unwrap_err());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
