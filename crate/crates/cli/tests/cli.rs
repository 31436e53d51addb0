use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cdf_cli::output::{read_episodes, summary_from_csv};

fn cdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdf"))
        .args(args)
        .env_remove("CDF_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let o = cdf(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

/// Small, fast scenario shared by the tests.
const SMALL: [&str; 4] = ["--set", "n_particles=200", "--episodes", "6"];

fn run_small(out: &Path, extra: &[&str]) {
    let out = out.to_str().unwrap();
    let mut args = vec!["run", "--out", out];
    args.extend(SMALL);
    args.extend(extra);
    run_ok(&args);
}

#[test]
fn repeated_runs_write_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_small(&a, &["--mode", "cdf", "--seed", "7", "--jobs", "1"]);
    run_small(&b, &["--mode", "cdf", "--seed", "7", "--jobs", "1"]);
    run_small(&c, &["--mode", "cdf", "--seed", "7", "--jobs", "8"]);
    let read = |p: &Path| fs::read(p.join("episodes.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
    assert_eq!(
        fs::read(a.join("config.toml")).unwrap(),
        fs::read(c.join("config.toml")).unwrap()
    );
}

#[test]
fn missing_or_invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = cdf(&[
        "run",
        "--config",
        "/nonexistent/cdf.toml",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "beta = 2.0\n").unwrap();
    let o = cdf(&["run", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = cdf(&["run", "--set", "no_such_key=1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn anomaly_gate_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // a 1 s cap times out every episode
    let o = cdf(&[
        "run",
        "--out",
        out.to_str().unwrap(),
        "--episodes",
        "2",
        "--mode",
        "reactive",
        "--set",
        "max_time=1.0",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("episodes.csv").exists());
}

#[test]
fn paired_run_reports_both_modes_and_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    run_small(&out, &["--mode", "cdf", "--mode", "reactive", "--paired-seeds"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for mode in ["cdf", "reactive"] {
        let s = &summary["modes"][mode];
        assert_eq!(s["n_episodes"], 6, "{mode}");
        assert!(s["collisions_imminent"].is_u64());
    }
    let paired = &summary["paired"];
    assert_eq!(paired["n_seeds"], 6);
    let eps = paired["episodes"].as_array().unwrap();
    assert_eq!(eps.len(), 6);
    for e in eps {
        for key in [
            "seed",
            "scenario_label",
            "cdf_collision",
            "reactive_collision",
            "collision_delta",
            "min_gap_delta",
        ] {
            assert!(!e[key].is_null(), "{key}");
        }
    }
    // paired seeds share the ground-truth label
    let log = read_episodes(fs::File::open(out.join("episodes.csv")).unwrap()).unwrap();
    for c in log.iter().filter(|o| o.mode == cdf_core::Mode::Cdf) {
        let r = log
            .iter()
            .find(|o| o.mode == cdf_core::Mode::Reactive && o.seed == c.seed)
            .unwrap();
        assert_eq!(c.scenario_label, r.scenario_label);
    }
    // every number is a function of the log
    assert_eq!(summary_from_csv(&out.join("episodes.csv")).unwrap(), summary);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    let confusion = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 4);
}

#[test]
fn traces_have_one_row_per_tick() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    run_small(&out, &["--mode", "cdf", "--trace", "--counterfactual"]);
    let log = read_episodes(fs::File::open(out.join("episodes.csv")).unwrap()).unwrap();
    for o in &log {
        let text = fs::read_to_string(out.join(format!("traces/cdf_{}.csv", o.seed))).unwrap();
        assert_eq!(
            text.lines().count() - 1,
            (o.termination_time / 0.1).round() as usize + 1
        );
        assert!(out.join(format!("traces/cdf_{}_counterfactual.csv", o.seed)).exists());
    }
}

#[test]
fn replay_matches_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    run_small(&out, &["--mode", "cdf", "--mode", "reactive", "--paired-seeds"]);
    let episodes = out.join("episodes.csv");
    let log = read_episodes(fs::File::open(&episodes).unwrap()).unwrap();
    let ep = out.to_str().unwrap().to_string() + "/episodes.csv";

    // several modes share the seed, so --mode is required
    assert_eq!(cdf(&["replay", &ep, "--seed", "0"]).status.code(), Some(1));
    assert_eq!(
        cdf(&["replay", &ep, "--seed", "999", "--mode", "cdf"]).status.code(),
        Some(1)
    );

    for o in &log {
        let seed = o.seed.to_string();
        let trace = dir.path().join(format!("{}_{seed}.csv", o.mode.as_str()));
        run_ok(&[
            "replay",
            &ep,
            "--seed",
            &seed,
            "--mode",
            o.mode.as_str(),
            "--out",
            trace.to_str().unwrap(),
        ]);
        let rows = fs::read_to_string(&trace).unwrap().lines().count() - 1;
        assert_eq!(rows, (o.termination_time / 0.1).round() as usize + 1);

        let cf = dir.path().join(format!("{}_{seed}_cf.csv", o.mode.as_str()));
        run_ok(&[
            "replay",
            &ep,
            "--seed",
            &seed,
            "--mode",
            o.mode.as_str(),
            "--counterfactual",
            "--out",
            cf.to_str().unwrap(),
        ]);
        // the counterfactual never brakes, and collides exactly on cutoffs
        let mut reader = csv::Reader::from_path(&cf).unwrap();
        let h = reader.headers().unwrap().clone();
        let iv = h.iter().position(|c| c == "intervening").unwrap();
        let gap = h.iter().position(|c| c == "gap").unwrap();
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        assert!(rows.iter().all(|r| &r[iv] == "0"));
        let last_gap: f64 = rows.last().unwrap()[gap].parse().unwrap();
        assert_eq!(
            last_gap <= 0.0,
            o.scenario_label == cdf_core::Label::Cutoff,
            "seed {seed}"
        );
    }
}

#[test]
fn default_config_is_shipped() {
    let o = cdf(&["default-config"]);
    assert!(o.status.success());
    let shipped = include_str!("../default-config.toml");
    assert_eq!(String::from_utf8(o.stdout).unwrap(), shipped);
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_cdf"))
        .args(["run", "--episodes", "1", "--mode", "reactive"])
        .env("CDF_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("episodes.csv").exists());
}
