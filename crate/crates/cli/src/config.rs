//! Flat key/value experiment configuration.
//!
//! Every key is optional in a file; missing keys take the defaults printed
//! by `cdf default-config`. `--set key=value` overrides are applied on top
//! of the file before validation.

use std::fs;
use std::path::Path;

use cdf_core::inference::ResamplePolicy;
use cdf_core::perception::StaleBelief;
use cdf_core::world::{ConvexPolygon, Vec2};
use cdf_core::{Footprint, LikelihoodParams, Mode, ScenarioConfig, VehicleParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSetting {
    Value(f64),
    /// `"p_left"`: use the scenario's own intent probability.
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    // experiment
    pub mode: String,
    pub n_episodes: u32,
    pub seed: u64,
    pub p_left: f64,
    pub dt: f64,
    pub planner_rate: f64,
    pub max_time: f64,
    /// Fraction of timed-out episodes tolerated before `run` exits with 2.
    pub max_anomalous_fraction: f64,

    // scenario start
    pub ego_start_distance: f64,
    pub ego_start_jitter: f64,
    pub obstacle_start_distance: f64,
    pub obstacle_start_speed: f64,
    pub release_margin: f64,

    // observation
    pub beta: f64,
    /// Observation noise stds for x, y, heading, speed.
    pub obs_noise_std: [f64; 4],
    pub belief_extrapolate: bool,

    // filter
    pub n_particles: usize,
    pub threshold: f64,
    pub horizon: f64,
    /// `"every_step"` or `"ess"`.
    pub resample: String,
    pub resample_ess_fraction: f64,
    pub inject_ego_control: bool,
    pub intent_floor: f64,
    pub prior_left: PriorSetting,
    /// Obstacle x, y, heading, speed then ego x, y, heading, speed.
    pub likelihood_sigma: [f64; 8],

    // behaviour
    pub gap_threshold: f64,
    pub min_hold_time: f64,
    pub ego_target_speed: f64,
    pub approach_speed: f64,
    pub cruise_speed: f64,
    pub stop_decel: f64,
    pub stop_tolerance: f64,
    pub stop_speed: f64,
    pub lookahead_min: f64,
    pub lookahead_gain: f64,
    pub speed_gain: f64,

    // vehicles (both)
    pub wheelbase: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub rear_axle_offset: f64,
    pub max_brake: f64,
    pub max_accel: f64,
    pub max_steer: f64,
    pub accel_noise_std: f64,
    pub steer_noise_std: f64,

    // map
    pub lane_width: f64,
    pub ego_approach: f64,
    pub ego_departure: f64,
    pub stem_approach: f64,
    pub stop_line_offset: f64,
    pub turn_radius: f64,
    pub waypoint_spacing: f64,
    pub conflict_margin: f64,
    /// Convex polygons, each a list of `[x, y]` vertices.
    pub occluders: Vec<Vec<[f64; 2]>>,
}

/// Default for `max_anomalous_fraction`.
pub const MAX_ANOMALOUS_FRACTION: f64 = 0.05;

impl Default for FileConfig {
    fn default() -> Self {
        Self::from_scenario(&ScenarioConfig::default(), MAX_ANOMALOUS_FRACTION)
    }
}

pub fn parse_mode(s: &str) -> Result<Mode, CliError> {
    match s {
        "cdf" => Ok(Mode::Cdf),
        "reactive" => Ok(Mode::Reactive),
        other => Err(CliError::Config(format!(
            "unknown mode `{other}` (expected cdf or reactive)"
        ))),
    }
}

impl FileConfig {
    pub fn from_scenario(c: &ScenarioConfig, max_anomalous_fraction: f64) -> Self {
        let v = &c.ego;
        let (resample, resample_ess_fraction) = match c.filter.resample {
            ResamplePolicy::EveryStep => ("every_step".to_string(), 0.5),
            ResamplePolicy::EssBelow(f) => ("ess".to_string(), f),
        };
        Self {
            mode: c.mode.as_str().to_string(),
            n_episodes: c.n_episodes,
            seed: c.seed,
            p_left: c.p_left,
            dt: c.dt,
            planner_rate: c.planner_rate,
            max_time: c.max_time,
            max_anomalous_fraction,
            ego_start_distance: c.ego_start_distance,
            ego_start_jitter: c.ego_start_jitter,
            obstacle_start_distance: c.obstacle_start_distance,
            obstacle_start_speed: c.obstacle_start_speed,
            release_margin: c.release_margin,
            beta: c.observation.beta,
            obs_noise_std: c.observation.noise_std,
            belief_extrapolate: c.observation.stale == StaleBelief::Extrapolate,
            n_particles: c.filter.n_particles,
            threshold: c.filter.threshold,
            horizon: c.filter.horizon,
            resample,
            resample_ess_fraction,
            inject_ego_control: c.filter.inject_ego_control,
            intent_floor: c.filter.intent_floor,
            prior_left: match c.filter.prior_left {
                Some(p) => PriorSetting::Value(p),
                None => PriorSetting::Named("p_left".to_string()),
            },
            likelihood_sigma: c.filter.likelihood.sigma,
            gap_threshold: c.behavior.gap_threshold,
            min_hold_time: c.behavior.min_hold_time,
            ego_target_speed: c.behavior.ego_target_speed,
            approach_speed: c.behavior.approach_speed,
            cruise_speed: c.behavior.cruise_speed,
            stop_decel: c.behavior.stop_decel,
            stop_tolerance: c.behavior.stop_tolerance,
            stop_speed: c.behavior.stop_speed,
            lookahead_min: c.behavior.lookahead_min,
            lookahead_gain: c.behavior.lookahead_gain,
            speed_gain: c.behavior.speed_gain,
            wheelbase: v.wheelbase,
            vehicle_length: v.footprint.length,
            vehicle_width: v.footprint.width,
            rear_axle_offset: v.footprint.rear_axle_offset,
            max_brake: v.max_brake,
            max_accel: v.max_accel,
            max_steer: v.max_steer,
            accel_noise_std: v.accel_noise_std,
            steer_noise_std: v.steer_noise_std,
            lane_width: c.world.lane_width,
            ego_approach: c.world.ego_approach,
            ego_departure: c.world.ego_departure,
            stem_approach: c.world.stem_approach,
            stop_line_offset: c.world.stop_line_offset,
            turn_radius: c.world.turn_radius,
            waypoint_spacing: c.world.waypoint_spacing,
            conflict_margin: c.world.conflict_margin,
            occluders: c
                .world
                .occluders
                .iter()
                .map(|p| p.vertices().iter().map(|v| [v.x, v.y]).collect())
                .collect(),
        }
    }

    pub fn to_scenario(&self) -> Result<ScenarioConfig, CliError> {
        let bad = |m: String| CliError::Config(m);
        let vehicle = VehicleParams {
            wheelbase: self.wheelbase,
            footprint: Footprint {
                length: self.vehicle_length,
                width: self.vehicle_width,
                rear_axle_offset: self.rear_axle_offset,
            },
            max_brake: self.max_brake,
            max_accel: self.max_accel,
            max_steer: self.max_steer,
            accel_noise_std: self.accel_noise_std,
            steer_noise_std: self.steer_noise_std,
        };
        let mut c = ScenarioConfig {
            ego: vehicle,
            obstacle: vehicle,
            mode: parse_mode(&self.mode)?,
            n_episodes: self.n_episodes,
            seed: self.seed,
            p_left: self.p_left,
            dt: self.dt,
            planner_rate: self.planner_rate,
            max_time: self.max_time,
            ego_start_distance: self.ego_start_distance,
            ego_start_jitter: self.ego_start_jitter,
            obstacle_start_distance: self.obstacle_start_distance,
            obstacle_start_speed: self.obstacle_start_speed,
            release_margin: self.release_margin,
            ..ScenarioConfig::default()
        };
        c.observation.beta = self.beta;
        c.observation.noise_std = self.obs_noise_std;
        c.observation.stale = if self.belief_extrapolate {
            StaleBelief::Extrapolate
        } else {
            StaleBelief::Freeze
        };
        c.filter.n_particles = self.n_particles;
        c.filter.threshold = self.threshold;
        c.filter.horizon = self.horizon;
        c.filter.resample = match self.resample.as_str() {
            "every_step" => ResamplePolicy::EveryStep,
            "ess" => ResamplePolicy::EssBelow(self.resample_ess_fraction),
            other => {
                return Err(bad(format!(
                    "unknown resample policy `{other}` (expected every_step or ess)"
                )))
            }
        };
        c.filter.inject_ego_control = self.inject_ego_control;
        c.filter.intent_floor = self.intent_floor;
        c.filter.prior_left = match &self.prior_left {
            PriorSetting::Value(p) => Some(*p),
            PriorSetting::Named(s) if s == "p_left" => None,
            PriorSetting::Named(s) => return Err(bad(format!("prior_left must be a number or \"p_left\", got `{s}`"))),
        };
        c.filter.likelihood = LikelihoodParams {
            sigma: self.likelihood_sigma,
        };
        let b = &mut c.behavior;
        b.gap_threshold = self.gap_threshold;
        b.min_hold_time = self.min_hold_time;
        b.ego_target_speed = self.ego_target_speed;
        b.approach_speed = self.approach_speed;
        b.cruise_speed = self.cruise_speed;
        b.stop_decel = self.stop_decel;
        b.stop_tolerance = self.stop_tolerance;
        b.stop_speed = self.stop_speed;
        b.lookahead_min = self.lookahead_min;
        b.lookahead_gain = self.lookahead_gain;
        b.speed_gain = self.speed_gain;
        let w = &mut c.world;
        w.lane_width = self.lane_width;
        w.ego_approach = self.ego_approach;
        w.ego_departure = self.ego_departure;
        w.stem_approach = self.stem_approach;
        w.stop_line_offset = self.stop_line_offset;
        w.turn_radius = self.turn_radius;
        w.waypoint_spacing = self.waypoint_spacing;
        w.conflict_margin = self.conflict_margin;
        w.occluders = self
            .occluders
            .iter()
            .enumerate()
            .map(|(i, pts)| {
                ConvexPolygon::new(pts.iter().map(|p| Vec2::new(p[0], p[1])).collect())
                    .map_err(|e| bad(format!("occluder {i}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        if !(0.0..=1.0).contains(&self.max_anomalous_fraction) {
            return Err(bad("max_anomalous_fraction must be in [0, 1]".into()));
        }
        if i64::try_from(c.seed).is_err() {
            return Err(bad("seed must fit in a signed 64-bit integer".into()));
        }
        c.validate().map_err(|e| bad(e.to_string()))?;
        cdf_core::world::build_t_intersection(&c.world).map_err(|e| bad(e.to_string()))?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parses `text`, applies `key=value` overrides and fills defaults.
pub fn parse(text: &str, overrides: &[String]) -> Result<FileConfig, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
        let key = key.trim();
        let value = value.trim();
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<FileConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let f = FileConfig::default();
        let back = parse(&f.to_toml(), &[]).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_scenario().unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn overrides_take_precedence() {
        let f = parse(
            "beta = 0.2\nmode = \"cdf\"",
            &["beta=0.3".into(), "mode=reactive".into()],
        )
        .unwrap();
        assert_eq!(f.beta, 0.3);
        assert_eq!(f.to_scenario().unwrap().mode, Mode::Reactive);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(parse("betta = 0.1", &[]).is_err());
        assert!(parse("beta = \"high\"", &[]).is_err());
        let f = parse("p_left = 1.5", &[]).unwrap();
        assert!(f.to_scenario().is_err());
        let f = parse("prior_left = \"uniform\"", &[]).unwrap();
        assert!(f.to_scenario().is_err());
    }

    #[test]
    fn prior_may_follow_the_scenario() {
        let f = parse("prior_left = \"p_left\"", &[]).unwrap();
        assert_eq!(f.to_scenario().unwrap().filter.prior_left, None);
        let f = parse("", &["prior_left=0.75".into()]).unwrap();
        assert_eq!(f.to_scenario().unwrap().filter.prior_left, Some(0.75));
    }

    #[test]
    fn occluders_parse_into_polygons() {
        let f = parse(
            "occluders = [[[-30.0, 5.0], [-6.0, 5.0], [-6.0, 25.0], [-30.0, 25.0]]]",
            &[],
        )
        .unwrap();
        let c = f.to_scenario().unwrap();
        assert_eq!(c.world.occluders.len(), 1);
        let f = parse("occluders = [[[-3.0, -3.0], [3.0, -3.0], [3.0, 3.0]]]", &[]).unwrap();
        assert!(f.to_scenario().is_err());
    }
}
