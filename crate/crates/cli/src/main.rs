use std::path::PathBuf;
use std::process::ExitCode;

use cdf_cli::config::{self, FileConfig};
use cdf_cli::experiment::{self, ReplayOptions, RunOptions};
use cdf_cli::CliError;
use cdf_core::Mode;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cdf", version, about = "Intent and belief inference at a T-intersection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cdf,
    Reactive,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cdf => Mode::Cdf,
            ModeArg::Reactive => Mode::Reactive,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes and write the results to a directory.
    Run {
        /// TOML config; omitted keys use the defaults.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set beta=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Planner(s) to run; repeat for several. Defaults to the config's `mode`.
        #[arg(short, long, value_enum)]
        mode: Vec<ModeArg>,
        #[arg(short = 'n', long)]
        episodes: Option<u32>,
        #[arg(short, long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(short, long)]
        jobs: Option<usize>,
        /// Write a per-tick trace for every episode.
        #[arg(long)]
        trace: bool,
        /// Also write the counterfactual (no intervention) trace.
        #[arg(long)]
        counterfactual: bool,
        /// Use the same seeds for every mode.
        #[arg(long)]
        paired_seeds: bool,
        #[arg(short, long, env = "CDF_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Re-simulate one logged episode and write its trace.
    Replay {
        /// `episodes.csv` from a previous run; its `config.toml` is read too.
        episodes: PathBuf,
        #[arg(short, long)]
        seed: u64,
        #[arg(short, long, value_enum)]
        mode: Option<ModeArg>,
        /// Write the counterfactual trace instead of the primary one.
        #[arg(long)]
        counterfactual: bool,
        /// Trace file (default: `traces/<mode>_<seed>.csv` next to the log).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the default config.
    DefaultConfig,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            mut overrides,
            mode,
            episodes,
            seed,
            jobs,
            trace,
            counterfactual,
            paired_seeds,
            out,
        } => {
            if let Some(p) = &config {
                if !p.is_file() {
                    return Err(CliError::Config(format!("{} does not exist", p.display())));
                }
            }
            if let Some(n) = episodes {
                overrides.push(format!("n_episodes={n}"));
            }
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            let file = config::load(config.as_deref(), &overrides)?;
            let opts = RunOptions {
                modes: mode.into_iter().map(Mode::from).collect(),
                jobs,
                trace,
                counterfactual,
                paired_seeds,
                out,
            };
            let report = experiment::run(&file, &opts);
            let report = match report {
                Ok(r) => r,
                Err(e @ CliError::TooManyAnomalous { .. }) => {
                    eprintln!("results written to {}", opts.out.display());
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            for (name, s) in report.summary["modes"].as_object().into_iter().flatten() {
                println!(
                    "{name}: {} episodes, {} imminent, {} occurred, {}% avoided",
                    s["n_episodes"], s["collisions_imminent"], s["collisions_occurred"], s["percent_avoided"]
                );
            }
            println!("results written to {}", report.out.display());
            Ok(())
        }
        Command::Replay {
            episodes,
            seed,
            mode,
            counterfactual,
            out,
        } => {
            let r = experiment::replay(&ReplayOptions {
                episodes,
                seed,
                mode: mode.map(Mode::from),
                counterfactual,
                out,
            })?;
            println!(
                "seed {seed}: {} -> {}, collision {}, {} rows written to {}",
                r.episode.scenario_label.as_str(),
                r.episode.predicted_label.map(|l| l.as_str()).unwrap_or("-"),
                r.episode.collision,
                r.rows,
                r.trace_path.display()
            );
            Ok(())
        }
        Command::DefaultConfig => {
            print!("{}", FileConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
