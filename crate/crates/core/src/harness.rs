//! Episode simulation and experiment aggregation.
//!
//! An episode draws the obstacle's intent, simulates the true system at a
//! fixed tick and lets the ego react in one of two ways:
//!
//! - [`Mode::Cdf`]: the particle filter runs every tick and an imminent
//!   collision alarm switches the ego to maximum braking.
//! - [`Mode::Reactive`]: the ego brakes once any corner of the obstacle's
//!   footprint enters its lane.
//!
//! Ground truth for each episode comes from a counterfactual replay of the
//! same seed with the ego's intervention disabled. All ground-truth
//! randomness comes from one stream with a fixed draw pattern per tick, so
//! the replay and the primary run agree exactly until the first intervention.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::behavior::{ego_control, pure_pursuit, BehaviorParams, Intent, YieldState};
use crate::dynamics::{ControlInput, VehicleParams, VehiclePose};
use crate::inference::{
    collision_imminent, init_particles, intent_posterior, propagate, resample_stratified, transition, weigh,
    EgoCommand, FilterError, FilterParams, ImminentAssessment, IntentDistribution, JointState, Model, ParticleSet,
    ResamplePolicy, SystemPose,
};
use crate::math::{cos, round};
use crate::perception::{Belief, Observation, ObservationParams};
use crate::rng::{stream, Stream};
use crate::world::{
    build_t_intersection, footprint_gap, footprints_collide, in_lane, WorldConfig, WorldError, WorldMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Cdf,
    Reactive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cdf => "cdf",
            Mode::Reactive => "reactive",
        }
    }
}

/// Scenario class, used both for ground truth and for predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Cutoff = 0,
    Yield = 1,
    Right = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Cutoff, Label::Yield, Label::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Cutoff => "cutoff",
            Label::Yield => "yield",
            Label::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("invalid scenario parameter `{0}`")]
    Invalid(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub world: WorldConfig,
    pub ego: VehicleParams,
    pub obstacle: VehicleParams,
    pub behavior: BehaviorParams,
    pub observation: ObservationParams,
    pub filter: FilterParams,
    /// P(obstacle turns left).
    pub p_left: f64,
    pub n_episodes: u32,
    pub seed: u64,
    pub mode: Mode,
    /// Decision rate of both planners, Hz.
    pub planner_rate: f64,
    pub dt: f64,
    /// Episode cap, s.
    pub max_time: f64,
    /// Ego front bumper distance before the conflict zone at t = 0, m.
    pub ego_start_distance: f64,
    /// Half-width of the uniform jitter added to `ego_start_distance`, m.
    pub ego_start_jitter: f64,
    /// Obstacle rear-axle distance before its stop point at t = 0, m.
    pub obstacle_start_distance: f64,
    pub obstacle_start_speed: f64,
    /// Extra following distance while an intervention is held, m.
    pub release_margin: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            ego: VehicleParams::default(),
            obstacle: VehicleParams::default(),
            behavior: BehaviorParams::default(),
            observation: ObservationParams::default(),
            filter: FilterParams::default(),
            p_left: 0.75,
            n_episodes: 1000,
            seed: 0,
            mode: Mode::Cdf,
            planner_rate: 10.0,
            dt: 0.1,
            max_time: 60.0,
            ego_start_distance: 50.0,
            ego_start_jitter: 10.0,
            obstacle_start_distance: 0.0,
            obstacle_start_speed: 0.0,
            release_margin: 4.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn check(ok: bool, name: &'static str) -> Result<(), ScenarioError> {
            if ok {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(name))
            }
        }
        check((0.0..=1.0).contains(&self.p_left), "p_left")?;
        check(self.n_episodes >= 1, "n_episodes")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "dt")?;
        check(self.max_time > 0.0 && self.max_time.is_finite(), "max_time")?;
        check(self.planner_rate > 0.0 && self.planner_rate.is_finite(), "planner_rate")?;
        let ticks = 1.0 / (self.planner_rate * self.dt);
        check(
            ticks >= 1.0 - 1e-9 && (ticks - round(ticks)).abs() < 1e-6,
            "planner_rate",
        )?;
        check(self.ego.is_valid(), "ego")?;
        check(self.obstacle.is_valid(), "obstacle")?;
        check(self.observation.is_valid(), "observation")?;
        check(self.filter.n_particles >= 1, "n_particles")?;
        check(self.filter.likelihood.is_valid(), "likelihood_sigma")?;
        check((0.0..=1.0).contains(&self.filter.threshold), "threshold")?;
        check(self.filter.horizon >= 0.0, "horizon")?;
        check((0.0..0.5).contains(&self.filter.intent_floor), "intent_floor")?;
        if let ResamplePolicy::EssBelow(f) = self.filter.resample {
            check((0.0..=1.0).contains(&f), "resample_ess")?;
        }
        if let Some(p) = self.filter.prior_left {
            check((0.0..=1.0).contains(&p), "prior_left")?;
        }
        check(self.behavior.gap_threshold >= 0.0, "gap_threshold")?;
        check(self.behavior.ego_target_speed > 0.0, "ego_target_speed")?;
        check(self.behavior.cruise_speed > 0.0, "cruise_speed")?;
        check(self.behavior.approach_speed > 0.0, "approach_speed")?;
        check(self.behavior.stop_decel > 0.0, "stop_decel")?;
        check(self.ego_start_distance > 0.0, "ego_start_distance")?;
        check(
            self.ego_start_jitter >= 0.0 && self.ego_start_jitter < self.ego_start_distance,
            "ego_start_jitter",
        )?;
        check(self.obstacle_start_distance >= 0.0, "obstacle_start_distance")?;
        check(self.obstacle_start_speed >= 0.0, "obstacle_start_speed")?;
        check(self.release_margin >= 0.0, "release_margin")?;
        Ok(())
    }

    pub fn planner_every(&self) -> u32 {
        round(1.0 / (self.planner_rate * self.dt)) as u32
    }

    /// Seed of episode `i`.
    pub fn episode_seed(&self, i: u32) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

/// Why an episode stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Collision,
    EgoExited,
    /// The time cap elapsed first; the episode is flagged anomalous.
    Timeout,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Collision => "collision",
            Termination::EgoExited => "exited",
            Termination::Timeout => "timeout",
        }
    }
}

/// One logged tick. Controls are the ones applied when leaving this state;
/// the observation and belief are the ones that produced them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u32,
    pub time: f64,
    pub system: SystemPose,
    pub observation: Observation,
    pub belief: Belief,
    pub obstacle_state: YieldState,
    pub obstacle_control: ControlInput,
    pub ego_control: ControlInput,
    pub intervening: bool,
    pub posterior: Option<IntentDistribution>,
    pub assessment: Option<ImminentAssessment>,
    /// Effective sample size after weighting.
    pub ess: Option<f64>,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub mode: Mode,
    pub intent: Intent,
    pub scenario_label: Label,
    /// `None` for a reactive episode whose planner never fired.
    pub predicted_label: Option<Label>,
    pub alarm_time: Option<f64>,
    pub collision: bool,
    pub min_gap: f64,
    pub termination: Termination,
    pub termination_time: f64,
    pub first_intervention_step: Option<u32>,
    pub final_posterior: Option<IntentDistribution>,
    pub degeneracy_events: u32,
    pub starvation_events: u32,
    pub trace: Vec<TraceRow>,
}

impl EpisodeResult {
    pub fn anomalous(&self) -> bool {
        self.termination == Termination::Timeout
    }
}

/// Cutoff iff the alarm fired; otherwise the MAP intent at episode end.
pub fn classify_prediction(alarm_time: Option<f64>, final_posterior: Option<&IntentDistribution>) -> Option<Label> {
    if alarm_time.is_some() {
        return Some(Label::Cutoff);
    }
    final_posterior.map(|post| match post.map_intent() {
        Intent::TurnLeft => Label::Yield,
        _ => Label::Right,
    })
}

/// How the ego is driven during a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Planner(Mode),
    /// No intervention: the counterfactual "keep your speed" ego.
    Passive,
}

/// A built world plus its configuration; runs episodes.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub config: ScenarioConfig,
    pub world: WorldMap,
}

impl Simulator {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let world = build_t_intersection(&config.world)?;
        Ok(Self { config, world })
    }

    pub fn model(&self) -> Model<'_> {
        Model {
            world: &self.world,
            ego: &self.config.ego,
            obstacle: &self.config.obstacle,
            behavior: &self.config.behavior,
            observation: &self.config.observation,
            dt: self.config.dt,
        }
    }

    fn filter_prior(&self) -> IntentDistribution {
        IntentDistribution::left(self.config.filter.prior_left.unwrap_or(self.config.p_left))
    }

    /// Draws the intent and initial state from the truth stream.
    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> JointState {
        let u_intent: f64 = rng.random();
        let u_jitter: f64 = rng.random();
        let intent = if u_intent < self.config.p_left {
            Intent::TurnLeft
        } else {
            Intent::TurnRight
        };
        self.initial_state_for(intent, u_jitter)
    }

    /// Initial state for a given intent; `u_jitter` in [0, 1) places the ego
    /// within its start range.
    pub fn initial_state_for(&self, intent: Intent, u_jitter: f64) -> JointState {
        let cfg = &self.config;
        let model = self.model();

        let fp = &cfg.ego.footprint;
        let zone = self.world.conflict();
        let distance = cfg.ego_start_distance + cfg.ego_start_jitter * (2.0 * u_jitter - 1.0);
        let front = zone.start - distance;
        let rear_axle = zone.origin + zone.direction * (front - fp.front_overhang());
        let heading = crate::math::atan2(zone.direction.y, zone.direction.x);
        let ego = VehiclePose::new(rear_axle.x, rear_axle.y, heading, cfg.behavior.ego_target_speed);

        // The left path runs straight down the stem past the stop line, so
        // both intents start from the same pose.
        let stem = self.world.path(Intent::TurnLeft);
        let stop = self.world.stop_arc(Intent::TurnLeft, &cfg.obstacle.footprint);
        let s0 = (stop - cfg.obstacle_start_distance).max(0.0);
        let p = stem.point_at(s0);
        let obstacle = VehiclePose::new(p.x, p.y, stem.heading_at(s0), cfg.obstacle_start_speed);

        let mut state = JointState::new(SystemPose { obstacle, ego }, intent, &model);
        state.obstacle_controller.path_hint = self.world.path(intent).project_global(p).0;
        state.ego_controller.path_hint = self.world.path(Intent::Straight).project_global(ego.position()).0;
        state
    }

    /// Keeps a triggered intervention going: the obstacle is moving through
    /// the junction between the stop line and the ego lane, or it is in the
    /// ego lane ahead and closer than the ego could stop relative to it.
    fn threat(&self, system: &SystemPose) -> bool {
        let cfg = &self.config;
        let zone = self.world.conflict();
        let ego = &system.ego;
        let obs = &system.obstacle;
        if !in_lane(&self.world, obs, &cfg.obstacle.footprint, WorldMap::EGO_LANE).unwrap_or(false) {
            return obs.v > cfg.behavior.stop_speed && self.in_junction(obs);
        }
        let ego_front = zone.along(ego.position()) + cfg.ego.footprint.front_overhang();
        let body = cfg.obstacle.footprint.body(obs);
        let obs_rear = body
            .corners()
            .iter()
            .map(|c| zone.along(*c))
            .fold(f64::INFINITY, f64::min);
        let gap = obs_rear - ego_front;
        if gap < -cfg.obstacle.footprint.length {
            return false;
        }
        let heading = crate::math::atan2(zone.direction.y, zone.direction.x);
        let v_obs = (obs.v * cos(obs.theta - heading)).max(0.0);
        let closing = (ego.v * ego.v - v_obs * v_obs).max(0.0) / (2.0 * cfg.ego.max_brake);
        gap < closing + cfg.release_margin
    }

    /// Any footprint corner between the stop line and the ego lane, within
    /// the stem's width.
    fn in_junction(&self, obs: &VehiclePose) -> bool {
        let w = self.config.world.lane_width;
        let stop_y = self.world.stop_line.0.y;
        self.config
            .obstacle
            .footprint
            .body(obs)
            .corners()
            .iter()
            .any(|c| (-w..=w).contains(&c.x) && (0.0..=stop_y).contains(&c.y))
    }

    pub fn run(&self, seed: u64, driver: Driver) -> Result<RunRecord, ScenarioError> {
        let cfg = &self.config;
        let model = self.model();
        let mut truth_rng = stream(seed, Stream::Truth);
        let mut filter_rng = stream(seed, Stream::Filter);

        let mut truth = self.initial_state(&mut truth_rng);
        let intent = truth.intent();
        let cdf = driver == Driver::Planner(Mode::Cdf);
        let mut particles: Option<ParticleSet> = if cdf {
            Some(init_particles(
                cfg.filter.n_particles,
                &truth.system,
                &self.filter_prior(),
                cfg.filter.intent_floor,
                &model,
                &mut filter_rng,
            )?)
        } else {
            None
        };
        let initial_counts = particles
            .as_ref()
            .map(|ps| (ps.count(Intent::TurnLeft), ps.count(Intent::TurnRight)));

        let planner_every = cfg.planner_every();
        let max_steps = round(cfg.max_time / cfg.dt) as u32;
        let mut trace: Vec<TraceRow> = Vec::new();
        let mut alarm_time = None;
        let mut triggered = false;
        let mut intervening = false;
        let mut first_intervention_step = None;
        let mut collision = false;
        let mut min_gap = f64::INFINITY;
        let mut degeneracy_events = 0;
        let mut starvation_events = 0;
        let mut posterior = None;

        let mut step = 0u32;
        let termination = loop {
            let time = step as f64 * cfg.dt;
            let system = truth.system;
            let gap = footprint_gap(
                &system.obstacle,
                &cfg.obstacle.footprint,
                &system.ego,
                &cfg.ego.footprint,
            );
            min_gap = min_gap.min(gap);
            if footprints_collide(
                &system.obstacle,
                &cfg.obstacle.footprint,
                &system.ego,
                &cfg.ego.footprint,
            ) {
                collision = true;
            }

            let mut assessment = None;
            let mut ess = None;
            if let Some(ps) = particles.as_mut() {
                if step > 0 {
                    let report = weigh(ps, &system, &cfg.filter.likelihood);
                    if report.degenerate {
                        degeneracy_events += 1;
                    }
                }
                ess = Some(ps.effective_sample_size());
                posterior = Some(intent_posterior(ps));
                assessment = Some(collision_imminent(ps, &model, cfg.filter.horizon, cfg.filter.threshold));
                let resample = match cfg.filter.resample {
                    ResamplePolicy::EveryStep => step > 0,
                    ResamplePolicy::EssBelow(f) => ps.effective_sample_size() < f * ps.len() as f64,
                };
                if resample {
                    resample_stratified(ps, &mut filter_rng);
                    if let Some((l0, r0)) = initial_counts {
                        let starved =
                            (l0 > 0 && ps.count(Intent::TurnLeft) == 0) || (r0 > 0 && ps.count(Intent::TurnRight) == 0);
                        if starved {
                            starvation_events += 1;
                        }
                    }
                }
            }

            let terminal = if collision {
                Some(Termination::Collision)
            } else if self.world.ego_has_exited(&system.ego) {
                Some(Termination::EgoExited)
            } else if step >= max_steps {
                Some(Termination::Timeout)
            } else {
                None
            };

            if terminal.is_none() && step.is_multiple_of(planner_every) {
                if let Driver::Planner(mode) = driver {
                    let fire = match mode {
                        Mode::Cdf => assessment.is_some_and(|a| a.imminent),
                        Mode::Reactive => {
                            !triggered
                                && in_lane(
                                    &self.world,
                                    &system.obstacle,
                                    &cfg.obstacle.footprint,
                                    WorldMap::EGO_LANE,
                                )?
                        }
                    };
                    if fire && alarm_time.is_none() {
                        alarm_time = Some(time);
                    }
                    triggered |= fire;
                    intervening = fire || (triggered && self.threat(&system));
                }
            }

            let ego_u = if terminal.is_some() {
                ControlInput::default()
            } else if intervening {
                first_intervention_step.get_or_insert(step);
                let (steer, hint, _) =
                    pure_pursuit(&system.ego, &self.world, &truth.ego_controller, &cfg.ego, &cfg.behavior);
                truth.ego_controller.path_hint = hint;
                ControlInput::new(-cfg.ego.max_brake, steer)
            } else {
                let (u, ctrl) = ego_control(
                    &system.ego,
                    &system.obstacle,
                    &truth.ego_controller,
                    &self.world,
                    &cfg.ego,
                    &cfg.behavior,
                );
                truth.ego_controller = ctrl;
                u
            };

            let mut row = TraceRow {
                step,
                time,
                system,
                observation: Observation::Nothing,
                belief: truth.belief,
                obstacle_state: truth.obstacle_controller.yield_state,
                obstacle_control: ControlInput::default(),
                ego_control: ego_u,
                intervening: intervening && terminal.is_none(),
                posterior,
                assessment,
                ess,
                gap,
            };

            if let Some(t) = terminal {
                trace.push(row);
                break t;
            }

            let record = transition(&mut truth, EgoCommand::Injected(ego_u), &model, step, &mut truth_rng);
            row.observation = record.observation;
            row.belief = truth.belief;
            row.obstacle_state = truth.obstacle_controller.yield_state;
            row.obstacle_control = record.obstacle_control;
            trace.push(row);

            if let Some(ps) = particles.as_mut() {
                let command = if cfg.filter.inject_ego_control {
                    EgoCommand::Injected(ego_u)
                } else {
                    EgoCommand::Generative
                };
                propagate(ps, command, &model, &mut filter_rng);
            }
            step += 1;
        };

        Ok(RunRecord {
            intent,
            alarm_time,
            collision,
            min_gap,
            termination,
            termination_time: step as f64 * cfg.dt,
            first_intervention_step,
            final_posterior: posterior,
            degeneracy_events,
            starvation_events,
            trace,
        })
    }

    /// Primary run plus counterfactual labelling.
    pub fn run_episode(&self, seed: u64, mode: Mode) -> Result<EpisodeResult, ScenarioError> {
        self.run_labelled(seed, mode).map(|(e, _)| e)
    }

    /// Like [`Simulator::run_episode`], also returning the counterfactual run.
    pub fn run_labelled(&self, seed: u64, mode: Mode) -> Result<(EpisodeResult, RunRecord), ScenarioError> {
        let counterfactual = self.run(seed, Driver::Passive)?;
        let primary = self.run(seed, Driver::Planner(mode))?;
        let scenario_label = if counterfactual.collision {
            Label::Cutoff
        } else if counterfactual.intent == Intent::TurnLeft {
            Label::Yield
        } else {
            Label::Right
        };
        let predicted_label = match mode {
            Mode::Cdf => classify_prediction(primary.alarm_time, primary.final_posterior.as_ref()),
            Mode::Reactive => primary.alarm_time.map(|_| Label::Cutoff),
        };
        let result = EpisodeResult {
            seed,
            mode,
            intent: primary.intent,
            scenario_label,
            predicted_label,
            alarm_time: primary.alarm_time,
            collision: primary.collision,
            min_gap: primary.min_gap,
            termination: primary.termination,
            termination_time: primary.termination_time,
            first_intervention_step: primary.first_intervention_step,
            final_posterior: primary.final_posterior,
            degeneracy_events: primary.degeneracy_events,
            starvation_events: primary.starvation_events,
            trace: primary.trace,
        };
        Ok((result, counterfactual))
    }
}

/// Raw result of one simulated run, before labelling.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub intent: Intent,
    pub alarm_time: Option<f64>,
    pub collision: bool,
    pub min_gap: f64,
    pub termination: Termination,
    pub termination_time: f64,
    pub first_intervention_step: Option<u32>,
    pub final_posterior: Option<IntentDistribution>,
    pub degeneracy_events: u32,
    pub starvation_events: u32,
    pub trace: Vec<TraceRow>,
}

pub fn run_episode(cfg: &ScenarioConfig, episode_seed: u64) -> Result<EpisodeResult, ScenarioError> {
    Simulator::new(cfg.clone())?.run_episode(episode_seed, cfg.mode)
}

/// Per-episode numbers that the summary is computed from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub mode: Mode,
    pub intent: Intent,
    pub scenario_label: Label,
    pub predicted_label: Option<Label>,
    pub alarm_time: Option<f64>,
    pub collision: bool,
    pub min_gap: f64,
    pub termination_time: f64,
    pub anomalous: bool,
    pub degeneracy_events: u32,
}

impl From<&EpisodeResult> for EpisodeOutcome {
    fn from(e: &EpisodeResult) -> Self {
        Self {
            seed: e.seed,
            mode: e.mode,
            intent: e.intent,
            scenario_label: e.scenario_label,
            predicted_label: e.predicted_label,
            alarm_time: e.alarm_time,
            collision: e.collision,
            min_gap: e.min_gap,
            termination_time: e.termination_time,
            anomalous: e.anomalous(),
            degeneracy_events: e.degeneracy_events,
        }
    }
}

/// Scenario x prediction counts, rows indexed by [`Label::index`].
pub type ConfusionMatrix = [[u32; 3]; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub mode: Mode,
    pub n_episodes: u32,
    pub scenario_counts: [u32; 3],
    /// Only meaningful for the filter; `None` in reactive mode.
    pub confusion: Option<ConfusionMatrix>,
    /// Episodes labelled Cutoff by the counterfactual replay.
    pub collisions_imminent: u32,
    pub collisions_occurred: u32,
    /// `1 - occurred / imminent`; `None` without imminent collisions.
    pub avoidance_rate: Option<f64>,
    /// `avoidance_rate` as a whole percentage.
    pub percent_avoided: Option<u32>,
    pub anomalous: u32,
}

impl ExperimentSummary {
    pub fn from_outcomes(mode: Mode, outcomes: &[EpisodeOutcome]) -> Self {
        let mut scenario_counts = [0u32; 3];
        let mut confusion = [[0u32; 3]; 3];
        let mut occurred = 0;
        let mut anomalous = 0;
        for o in outcomes {
            scenario_counts[o.scenario_label.index()] += 1;
            if let Some(p) = o.predicted_label {
                confusion[o.scenario_label.index()][p.index()] += 1;
            }
            occurred += o.collision as u32;
            anomalous += o.anomalous as u32;
        }
        let imminent = scenario_counts[Label::Cutoff.index()];
        let avoidance_rate = (imminent > 0).then(|| 1.0 - occurred as f64 / imminent as f64);
        Self {
            mode,
            n_episodes: outcomes.len() as u32,
            scenario_counts,
            confusion: (mode == Mode::Cdf).then_some(confusion),
            collisions_imminent: imminent,
            collisions_occurred: occurred,
            avoidance_rate,
            percent_avoided: avoidance_rate.map(|r| round(100.0 * r).max(0.0) as u32),
            anomalous,
        }
    }

    /// Fraction of Cutoff episodes predicted Cutoff.
    pub fn cutoff_recall(&self) -> Option<f64> {
        let m = self.confusion?;
        let row = m[0];
        let total: u32 = row.iter().sum();
        (total > 0).then(|| row[0] as f64 / total as f64)
    }
}

/// Runs `n_episodes` sequentially with seeds `seed + i`.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<(ExperimentSummary, Vec<EpisodeOutcome>), ScenarioError> {
    let sim = Simulator::new(cfg.clone())?;
    let mut outcomes = Vec::with_capacity(cfg.n_episodes as usize);
    for i in 0..cfg.n_episodes {
        let e = sim.run_episode(cfg.episode_seed(i), cfg.mode)?;
        outcomes.push(EpisodeOutcome::from(&e));
    }
    Ok((ExperimentSummary::from_outcomes(cfg.mode, &outcomes), outcomes))
}

/// Filter output on a scripted, noise-free left turn.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedRun {
    /// P(left) after weighting at each step.
    pub p_left: Vec<f64>,
    /// First step with any obstacle corner in the ego lane.
    pub lane_entry_step: Option<u32>,
}

impl ScriptedRun {
    pub fn first_step_above(&self, p: f64) -> Option<u32> {
        self.p_left.iter().position(|&q| q > p).map(|i| i as u32)
    }
}

/// Runs the filter (with its usual noise model) against a ground truth in
/// which the obstacle turns left, never sees the ego and neither vehicle has
/// process noise. Stops at lane entry or after `max_time`.
pub fn noise_free_left_turn(cfg: &ScenarioConfig, n_particles: usize, seed: u64) -> Result<ScriptedRun, ScenarioError> {
    let sim = Simulator::new(cfg.clone())?;
    let model = sim.model();
    let quiet = |v: &VehicleParams| VehicleParams {
        accel_noise_std: 0.0,
        steer_noise_std: 0.0,
        ..*v
    };
    let truth_ego = quiet(&cfg.ego);
    let truth_obstacle = quiet(&cfg.obstacle);
    let blind = ObservationParams {
        beta: 0.0,
        ..cfg.observation
    };
    let truth_model = Model {
        ego: &truth_ego,
        obstacle: &truth_obstacle,
        observation: &blind,
        ..model
    };

    let mut truth_rng = stream(seed, Stream::Truth);
    let mut filter_rng = stream(seed, Stream::Filter);
    let mut truth = sim.initial_state_for(Intent::TurnLeft, 0.5);
    let mut ps = init_particles(
        n_particles,
        &truth.system,
        &sim.filter_prior(),
        cfg.filter.intent_floor,
        &model,
        &mut filter_rng,
    )?;
    let max_steps = round(cfg.max_time / cfg.dt) as u32;
    let mut p_left = Vec::new();
    let mut lane_entry_step = None;
    for step in 0..=max_steps {
        if step > 0 {
            weigh(&mut ps, &truth.system, &cfg.filter.likelihood);
        }
        p_left.push(intent_posterior(&ps).turn_left);
        resample_stratified(&mut ps, &mut filter_rng);
        if in_lane(
            &sim.world,
            &truth.system.obstacle,
            &cfg.obstacle.footprint,
            WorldMap::EGO_LANE,
        )? {
            lane_entry_step = Some(step);
            break;
        }
        let system = truth.system;
        let (ego_u, ctrl) = ego_control(
            &system.ego,
            &system.obstacle,
            &truth.ego_controller,
            &sim.world,
            &cfg.ego,
            &cfg.behavior,
        );
        truth.ego_controller = ctrl;
        transition(
            &mut truth,
            EgoCommand::Injected(ego_u),
            &truth_model,
            step,
            &mut truth_rng,
        );
        propagate(&mut ps, EgoCommand::Injected(ego_u), &model, &mut filter_rng);
    }
    Ok(ScriptedRun {
        p_left,
        lane_entry_step,
    })
}

/// First time in a recorded `(time, p)` trace at which `p > threshold`.
pub fn alarm_time_for_threshold(trace: &[(f64, f64)], threshold: f64) -> Option<f64> {
    trace.iter().find(|(_, p)| *p > threshold).map(|(t, _)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ScenarioConfig {
        ScenarioConfig {
            filter: FilterParams {
                n_particles: 200,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = quick();
        c.p_left = 1.5;
        assert_eq!(c.validate(), Err(ScenarioError::Invalid("p_left")));
        let mut c = quick();
        c.n_episodes = 0;
        assert!(c.validate().is_err());
        let mut c = quick();
        c.planner_rate = 3.0;
        assert_eq!(c.validate(), Err(ScenarioError::Invalid("planner_rate")));
        let mut c = quick();
        c.planner_rate = 5.0;
        assert!(c.validate().is_ok());
        assert_eq!(c.planner_every(), 2);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_prediction(Some(2.3), None), Some(Label::Cutoff));
        assert_eq!(
            classify_prediction(None, Some(&IntentDistribution::left(0.9))),
            Some(Label::Yield)
        );
        assert_eq!(
            classify_prediction(None, Some(&IntentDistribution::left(0.03))),
            Some(Label::Right)
        );
    }

    #[test]
    fn no_left_turners_means_all_right() {
        let mut c = quick();
        c.p_left = 0.0;
        c.n_episodes = 5;
        let (summary, outcomes) = run_experiment(&c).unwrap();
        assert!(outcomes.iter().all(|o| o.scenario_label == Label::Right));
        assert_eq!(summary.scenario_counts, [0, 0, 5]);
    }

    #[test]
    fn perfect_sight_left_turner_yields() {
        let mut c = quick();
        c.p_left = 1.0;
        c.observation.beta = 1.0;
        c.observation.noise_std = [0.0; 4];
        for seed in 0..5 {
            let e = run_episode(&c, seed).unwrap();
            assert_eq!(e.intent, Intent::TurnLeft);
            assert_eq!(e.scenario_label, Label::Yield);
            assert!(!e.collision);
        }
    }

    #[test]
    fn single_episode_summary_has_one_cell() {
        let mut c = quick();
        c.n_episodes = 1;
        let (summary, _) = run_experiment(&c).unwrap();
        let m = summary.confusion.unwrap();
        let nonzero = m.iter().flatten().filter(|&&v| v > 0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn trace_length_matches_termination_time() {
        let c = quick();
        let e = run_episode(&c, 3).unwrap();
        let expected = round(e.termination_time / c.dt) as usize + 1;
        assert_eq!(e.trace.len(), expected);
    }

    #[test]
    fn threshold_sweep_is_monotone() {
        let trace = [(0.0, 0.1), (0.1, 0.3), (0.2, 0.2), (0.3, 0.7), (0.4, 0.95)];
        // Lowering the threshold can only move the alarm earlier.
        let mut last = f64::INFINITY;
        for k in (0..=20).rev() {
            let thr = k as f64 / 20.0;
            let t = alarm_time_for_threshold(&trace, thr).unwrap_or(f64::INFINITY);
            assert!(t <= last, "threshold {thr}: {t} after {last}");
            last = t;
        }
        assert_eq!(alarm_time_for_threshold(&trace, 0.5), Some(0.3));
        assert_eq!(alarm_time_for_threshold(&trace, 0.99), None);
    }
}
