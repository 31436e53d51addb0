//! `run` and `replay`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use cdf_core::harness::{EpisodeOutcome, EpisodeResult, Simulator, TraceRow};
use cdf_core::rng::mix_seed;
use cdf_core::{Mode, ScenarioConfig};
use rayon::prelude::*;
use serde_json::json;

use crate::config::FileConfig;
use crate::output::{self, summary_from_csv};
use crate::CliError;

/// Salt for the reactive base seed of unpaired runs.
const REACTIVE_SALT: u64 = 0x7265_6163;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub modes: Vec<Mode>,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub trace: bool,
    pub counterfactual: bool,
    /// Run every mode on the same seeds.
    pub paired_seeds: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub outcomes: Vec<EpisodeOutcome>,
    pub summary: serde_json::Value,
    pub out: PathBuf,
}

/// First seed of `mode`'s episodes.
pub fn base_seed(seed: u64, mode: Mode, paired: bool) -> u64 {
    match (mode, paired) {
        (Mode::Reactive, false) => mix_seed(seed, REACTIVE_SALT),
        _ => seed,
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).expect("json");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

fn trace_path(dir: &Path, mode: Mode, seed: u64, counterfactual: bool) -> PathBuf {
    let suffix = if counterfactual { "_counterfactual" } else { "" };
    dir.join(format!("{}_{seed}{suffix}.csv", mode.as_str()))
}

fn save_trace(path: &Path, trace: &[TraceRow]) -> Result<(), CliError> {
    output::write_trace(output::create(path)?, trace)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

/// Runs one mode's episodes, in seed order regardless of `jobs`.
pub fn run_mode(
    sim: &Simulator,
    mode: Mode,
    base: u64,
    n: u32,
    trace_dir: Option<(&Path, bool, bool)>,
) -> Result<Vec<EpisodeOutcome>, CliError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = base.wrapping_add(i as u64);
            let (e, cf) = sim.run_labelled(seed, mode)?;
            if let Some((dir, primary, counterfactual)) = trace_dir {
                if primary {
                    save_trace(&trace_path(dir, mode, seed, false), &e.trace)?;
                }
                if counterfactual {
                    save_trace(&trace_path(dir, mode, seed, true), &cf.trace)?;
                }
            }
            Ok(EpisodeOutcome::from(&e))
        })
        .collect()
}

pub fn run(file: &FileConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let cfg = file.to_scenario()?;
    let modes = if opts.modes.is_empty() {
        vec![cfg.mode]
    } else {
        dedup(&opts.modes)
    };
    let out = &opts.out;
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let traces = out.join("traces");
    let tracing = opts.trace || opts.counterfactual;
    if tracing {
        fs::create_dir_all(&traces).map_err(CliError::io(&traces))?;
    }

    let started = unix_now();
    let clock = Instant::now();
    let mode_entries: Vec<_> = modes
        .iter()
        .map(|m| json!({ "mode": m.as_str(), "base_seed": base_seed(cfg.seed, *m, opts.paired_seeds) }))
        .collect();
    let mut manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "status": "running",
        "seed": cfg.seed,
        "n_episodes": cfg.n_episodes,
        "paired_seeds": opts.paired_seeds,
        "modes": mode_entries,
        "started_unix": started,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, file.to_toml()).map_err(CliError::io(&config_path))?;

    let sim = Simulator::new(cfg.clone())?;
    let pool = pool(opts.jobs)?;
    let mut outcomes = Vec::new();
    for &mode in &modes {
        let base = base_seed(cfg.seed, mode, opts.paired_seeds);
        let dir = tracing.then_some((traces.as_path(), opts.trace, opts.counterfactual));
        outcomes.extend(pool.install(|| run_mode(&sim, mode, base, cfg.n_episodes, dir))?);
    }

    let episodes = out.join("episodes.csv");
    output::write_episodes(output::create(&episodes)?, &outcomes)?;
    let summary = summary_from_csv(&episodes)?;
    write_json(&out.join("summary.json"), &summary)?;
    let mut summaries = Vec::new();
    for &mode in &modes {
        let v: Vec<_> = outcomes.iter().filter(|o| o.mode == mode).copied().collect();
        summaries.push(cdf_core::ExperimentSummary::from_outcomes(mode, &v));
    }
    output::write_confusion(output::create(&out.join("confusion.csv"))?, &summaries)?;

    let anomalous = outcomes.iter().filter(|o| o.anomalous).count() as u32;
    let total = outcomes.len() as u32;
    manifest["status"] = json!("complete");
    manifest["finished_unix"] = json!(unix_now());
    manifest["elapsed_seconds"] = json!(clock.elapsed().as_secs_f64());
    manifest["anomalous"] = json!(anomalous);
    write_json(&out.join("manifest.json"), &manifest)?;

    if total > 0 && anomalous as f64 > file.max_anomalous_fraction * total as f64 {
        return Err(CliError::TooManyAnomalous {
            anomalous,
            total,
            limit: file.max_anomalous_fraction,
        });
    }
    Ok(RunReport {
        outcomes,
        summary,
        out: out.clone(),
    })
}

fn dedup(modes: &[Mode]) -> Vec<Mode> {
    let mut v = Vec::new();
    for m in modes {
        if !v.contains(m) {
            v.push(*m);
        }
    }
    v
}

#[derive(Clone, Debug)]
pub struct ReplayOptions {
    pub episodes: PathBuf,
    pub seed: u64,
    pub mode: Option<Mode>,
    pub counterfactual: bool,
    /// Trace destination; defaults to `traces/` next to the log.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub episode: EpisodeResult,
    pub trace_path: PathBuf,
    pub rows: usize,
}

/// Re-simulates one logged episode from the run's config snapshot and checks
/// it against the log.
pub fn replay(opts: &ReplayOptions) -> Result<ReplayReport, CliError> {
    let dir = opts.episodes.parent().map(Path::to_path_buf).unwrap_or_default();
    let config_path = dir.join("config.toml");
    let file = crate::config::load(Some(&config_path), &[])?;
    let cfg: ScenarioConfig = file.to_scenario()?;
    let f = fs::File::open(&opts.episodes).map_err(CliError::io(&opts.episodes))?;
    let log = output::read_episodes(f)?;
    let candidates: Vec<_> = log
        .iter()
        .filter(|o| o.seed == opts.seed && opts.mode.is_none_or(|m| m == o.mode))
        .collect();
    let logged = match candidates.as_slice() {
        [] => return Err(CliError::UnknownSeed(opts.seed)),
        [one] => **one,
        _ => {
            return Err(CliError::Config(format!(
                "seed {} was run in several modes; pass --mode",
                opts.seed
            )))
        }
    };

    let sim = Simulator::new(cfg)?;
    let (episode, cf) = sim.run_labelled(opts.seed, logged.mode)?;
    let check = |ok: bool, field| {
        if ok {
            Ok(())
        } else {
            Err(CliError::ReplayMismatch { seed: opts.seed, field })
        }
    };
    check(episode.scenario_label == logged.scenario_label, "scenario_label")?;
    check(episode.predicted_label == logged.predicted_label, "predicted_label")?;
    check(episode.collision == logged.collision, "collision")?;

    let trace = if opts.counterfactual { &cf.trace } else { &episode.trace };
    let trace_path = match &opts.out {
        Some(p) => p.clone(),
        None => {
            let traces = dir.join("traces");
            fs::create_dir_all(&traces).map_err(CliError::io(&traces))?;
            trace_path(&traces, logged.mode, opts.seed, opts.counterfactual)
        }
    };
    save_trace(&trace_path, trace)?;
    let rows = trace.len();
    Ok(ReplayReport {
        episode,
        trace_path,
        rows,
    })
}
