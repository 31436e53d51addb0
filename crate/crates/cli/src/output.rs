//! CSV and JSON writers for episode logs, traces and summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use cdf_core::harness::{EpisodeOutcome, ExperimentSummary, TraceRow};
use cdf_core::{Intent, Label, Mode, VehiclePose};
use serde_json::{json, Value};

use crate::format::g9;
use crate::CliError;

pub const EPISODE_HEADER: [&str; 11] = [
    "mode",
    "seed",
    "intent",
    "scenario_label",
    "predicted_label",
    "alarm_time",
    "collision",
    "min_gap",
    "termination_time",
    "anomalous",
    "degeneracy_events",
];

pub const TRACE_HEADER: [&str; 27] = [
    "step",
    "time",
    "ego_x",
    "ego_y",
    "ego_theta",
    "ego_v",
    "obstacle_x",
    "obstacle_y",
    "obstacle_theta",
    "obstacle_v",
    "observed",
    "belief_x",
    "belief_y",
    "belief_theta",
    "belief_v",
    "obstacle_state",
    "obstacle_accel",
    "obstacle_steer",
    "ego_accel",
    "ego_steer",
    "intervening",
    "p_left",
    "p_imminent",
    "p_believed_clear",
    "p_proceeding",
    "ess",
    "gap",
];

pub fn parse_mode(s: &str) -> Option<Mode> {
    match s {
        "cdf" => Some(Mode::Cdf),
        "reactive" => Some(Mode::Reactive),
        _ => None,
    }
}

pub fn parse_label(s: &str) -> Option<Label> {
    Label::ALL.into_iter().find(|l| l.as_str() == s)
}

fn parse_intent(s: &str) -> Option<Intent> {
    [Intent::Straight, Intent::TurnLeft, Intent::TurnRight]
        .into_iter()
        .find(|i| i.as_str() == s)
}

fn opt(x: Option<f64>) -> String {
    x.map(g9).unwrap_or_default()
}

fn episode_record(o: &EpisodeOutcome) -> [String; 11] {
    [
        o.mode.as_str().into(),
        o.seed.to_string(),
        o.intent.as_str().into(),
        o.scenario_label.as_str().into(),
        o.predicted_label.map(|l| l.as_str()).unwrap_or_default().into(),
        opt(o.alarm_time),
        u8::from(o.collision).to_string(),
        g9(o.min_gap),
        g9(o.termination_time),
        u8::from(o.anomalous).to_string(),
        o.degeneracy_events.to_string(),
    ]
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

pub fn write_episodes<W: Write>(w: W, outcomes: &[EpisodeOutcome]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(EPISODE_HEADER)?;
    for o in outcomes {
        csv.write_record(episode_record(o))?;
    }
    csv.flush().map_err(CliError::io("episodes.csv"))?;
    Ok(())
}

pub fn read_episodes<R: Read>(r: R) -> Result<Vec<EpisodeOutcome>, CliError> {
    let mut csv = csv::Reader::from_reader(r);
    let header = csv.headers()?.clone();
    if header.iter().ne(EPISODE_HEADER) {
        return Err(CliError::Log(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| CliError::Log(format!("row {}: bad {col}", i + 1));
        let f = |k: usize| -> Result<f64, CliError> { rec[k].parse().map_err(|_| bad(EPISODE_HEADER[k])) };
        let b = |k: usize| -> Result<bool, CliError> {
            match &rec[k] {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(EPISODE_HEADER[k])),
            }
        };
        out.push(EpisodeOutcome {
            mode: parse_mode(&rec[0]).ok_or_else(|| bad("mode"))?,
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            intent: parse_intent(&rec[2]).ok_or_else(|| bad("intent"))?,
            scenario_label: parse_label(&rec[3]).ok_or_else(|| bad("scenario_label"))?,
            predicted_label: match &rec[4] {
                "" => None,
                s => Some(parse_label(s).ok_or_else(|| bad("predicted_label"))?),
            },
            alarm_time: match &rec[5] {
                "" => None,
                _ => Some(f(5)?),
            },
            collision: b(6)?,
            min_gap: f(7)?,
            termination_time: f(8)?,
            anomalous: b(9)?,
            degeneracy_events: rec[10].parse().map_err(|_| bad("degeneracy_events"))?,
        });
    }
    Ok(out)
}

pub fn write_confusion<W: Write>(w: W, summaries: &[ExperimentSummary]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "mode",
        "scenario_label",
        "predicted_cutoff",
        "predicted_yield",
        "predicted_right",
    ])?;
    for s in summaries {
        if let Some(m) = s.confusion {
            for label in Label::ALL {
                let row = m[label.index()];
                csv.write_record([
                    s.mode.as_str().to_string(),
                    label.as_str().to_string(),
                    row[0].to_string(),
                    row[1].to_string(),
                    row[2].to_string(),
                ])?;
            }
        }
    }
    csv.flush().map_err(CliError::io("confusion.csv"))?;
    Ok(())
}

fn labelled(counts: [u32; 3]) -> Value {
    json!({
        "cutoff": counts[0],
        "yield": counts[1],
        "right": counts[2],
    })
}

pub fn summary_value(s: &ExperimentSummary) -> Value {
    json!({
        "mode": s.mode.as_str(),
        "n_episodes": s.n_episodes,
        "scenario_counts": labelled(s.scenario_counts),
        "confusion": s.confusion.map(|m| {
            let mut rows = serde_json::Map::new();
            for label in Label::ALL {
                rows.insert(label.as_str().into(), labelled(m[label.index()]));
            }
            Value::Object(rows)
        }),
        "cutoff_recall": s.cutoff_recall(),
        "collisions_imminent": s.collisions_imminent,
        "collisions_occurred": s.collisions_occurred,
        "avoidance_rate": s.avoidance_rate,
        "percent_avoided": s.percent_avoided,
        "anomalous": s.anomalous,
    })
}

/// Per-mode summaries, plus per-seed comparisons for seeds run in both modes.
pub fn summary_from_outcomes(outcomes: &[EpisodeOutcome]) -> Value {
    let mut by_mode: Vec<(Mode, Vec<EpisodeOutcome>)> = Vec::new();
    for o in outcomes {
        match by_mode.iter_mut().find(|(m, _)| *m == o.mode) {
            Some((_, v)) => v.push(*o),
            None => by_mode.push((o.mode, vec![*o])),
        }
    }
    let mut modes = serde_json::Map::new();
    for (mode, v) in &by_mode {
        modes.insert(
            mode.as_str().into(),
            summary_value(&ExperimentSummary::from_outcomes(*mode, v)),
        );
    }

    let mut paired = Vec::new();
    let cdf: BTreeMap<u64, &EpisodeOutcome> = outcomes
        .iter()
        .filter(|o| o.mode == Mode::Cdf)
        .map(|o| (o.seed, o))
        .collect();
    for r in outcomes.iter().filter(|o| o.mode == Mode::Reactive) {
        if let Some(c) = cdf.get(&r.seed) {
            paired.push(json!({
                "seed": r.seed,
                "scenario_label": c.scenario_label.as_str(),
                "cdf_collision": c.collision,
                "reactive_collision": r.collision,
                "collision_delta": i32::from(c.collision) - i32::from(r.collision),
                "min_gap_delta": c.min_gap - r.min_gap,
            }));
        }
    }
    let paired = (!paired.is_empty()).then(|| {
        let n = paired.len();
        let cdf_hits: i64 = paired
            .iter()
            .map(|p| p["cdf_collision"].as_bool().unwrap() as i64)
            .sum();
        let reactive_hits: i64 = paired
            .iter()
            .map(|p| p["reactive_collision"].as_bool().unwrap() as i64)
            .sum();
        json!({
            "n_seeds": n,
            "cdf_only_collisions": paired.iter().filter(|p| p["collision_delta"] == 1).count(),
            "reactive_only_collisions": paired.iter().filter(|p| p["collision_delta"] == -1).count(),
            "collision_count_delta": cdf_hits - reactive_hits,
            "episodes": paired,
        })
    });
    json!({ "modes": modes, "paired": paired })
}

/// Recomputes `summary.json` from an `episodes.csv`.
pub fn summary_from_csv(path: &Path) -> Result<Value, CliError> {
    let f = File::open(path).map_err(CliError::io(path))?;
    Ok(summary_from_outcomes(&read_episodes(f)?))
}

fn pose_cols(p: Option<&VehiclePose>) -> [String; 4] {
    match p {
        Some(p) => [g9(p.x), g9(p.y), g9(p.theta), g9(p.v)],
        None => Default::default(),
    }
}

pub fn write_trace<W: Write>(w: W, trace: &[TraceRow]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TRACE_HEADER)?;
    for r in trace {
        let mut rec: Vec<String> = Vec::with_capacity(TRACE_HEADER.len());
        rec.push(r.step.to_string());
        rec.push(g9(r.time));
        rec.extend(pose_cols(Some(&r.system.ego)));
        rec.extend(pose_cols(Some(&r.system.obstacle)));
        rec.push(u8::from(r.observation.pose().is_some()).to_string());
        rec.extend(pose_cols(r.belief.pose()));
        rec.push(r.obstacle_state.as_str().into());
        rec.push(g9(r.obstacle_control.accel));
        rec.push(g9(r.obstacle_control.steer));
        rec.push(g9(r.ego_control.accel));
        rec.push(g9(r.ego_control.steer));
        rec.push(u8::from(r.intervening).to_string());
        rec.push(opt(r.posterior.map(|p| p.turn_left)));
        rec.push(opt(r.assessment.map(|a| a.p)));
        rec.push(opt(r.assessment.map(|a| a.p_believed_clear)));
        rec.push(opt(r.assessment.map(|a| a.p_proceeding)));
        rec.push(opt(r.ess));
        rec.push(g9(r.gap));
        csv.write_record(&rec)?;
    }
    csv.flush().map_err(CliError::io("trace"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(mode: Mode, seed: u64, label: Label, collision: bool) -> EpisodeOutcome {
        EpisodeOutcome {
            seed,
            mode,
            intent: if label == Label::Right {
                Intent::TurnRight
            } else {
                Intent::TurnLeft
            },
            scenario_label: label,
            predicted_label: (mode == Mode::Cdf).then_some(label),
            alarm_time: (label == Label::Cutoff).then_some(2.3),
            collision,
            min_gap: 1.0 / 3.0,
            termination_time: 7.1,
            anomalous: false,
            degeneracy_events: 0,
        }
    }

    #[test]
    fn episodes_round_trip() {
        let v = vec![
            outcome(Mode::Cdf, 4, Label::Cutoff, false),
            outcome(Mode::Reactive, 4, Label::Cutoff, true),
            outcome(Mode::Cdf, 5, Label::Right, false),
        ];
        let mut buf = Vec::new();
        write_episodes(&mut buf, &v).unwrap();
        let back = read_episodes(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.predicted_label, b.predicted_label);
            assert_eq!(a.alarm_time, b.alarm_time);
            assert_eq!(a.collision, b.collision);
            assert!((a.min_gap - b.min_gap).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_foreign_logs() {
        assert!(read_episodes("a,b\n1,2\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_episodes(&mut buf, &[outcome(Mode::Cdf, 1, Label::Yield, false)]).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",yield,", ",maybe,");
        assert!(read_episodes(text.as_bytes()).is_err());
    }

    #[test]
    fn paired_deltas() {
        let v = vec![
            outcome(Mode::Cdf, 4, Label::Cutoff, false),
            outcome(Mode::Cdf, 5, Label::Cutoff, false),
            outcome(Mode::Reactive, 4, Label::Cutoff, true),
            outcome(Mode::Reactive, 5, Label::Cutoff, false),
        ];
        let s = summary_from_outcomes(&v);
        assert_eq!(s["paired"]["n_seeds"], 2);
        assert_eq!(s["paired"]["reactive_only_collisions"], 1);
        assert_eq!(s["paired"]["collision_count_delta"], -1);
        assert_eq!(s["modes"]["reactive"]["percent_avoided"], 50);
        assert_eq!(s["modes"]["cdf"]["confusion"]["cutoff"]["cutoff"], 2);
        assert!(s["modes"]["reactive"]["confusion"].is_null());
    }
}
