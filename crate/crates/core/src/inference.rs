//! Particle filter over the joint hidden state `[system pose, belief, intent]`.
//!
//! Each particle carries a full copy of the generative model's state,
//! including the obstacle's FSM, and is moved by the same transition the
//! ground-truth simulator uses ([`transition`]). The measured system pose is
//! the only evidence; intent and belief are identified through how well each
//! hypothesis predicts the obstacle's motion.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::behavior::{
    believed_clear, ego_control, obstacle_control, time_to_conflict, BehaviorParams, ControllerState, Intent,
    YieldState,
};
use crate::dynamics::{sample_noise, step, ControlInput, VehicleParams, VehiclePose};
use crate::math::{exp, wrap_angle};
use crate::perception::{observe, update_belief, Belief, Observation, ObservationParams};
use crate::world::WorldMap;

/// S_t: obstacle pose first, then ego pose.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SystemPose {
    pub obstacle: VehiclePose,
    pub ego: VehiclePose,
}

impl SystemPose {
    pub fn to_array(&self) -> [f64; 8] {
        let o = self.obstacle.to_array();
        let e = self.ego.to_array();
        [o[0], o[1], o[2], o[3], e[0], e[1], e[2], e[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.obstacle.is_finite() && self.ego.is_finite()
    }
}

/// Everything the transition F needs besides the state itself.
#[derive(Clone, Copy, Debug)]
pub struct Model<'a> {
    pub world: &'a WorldMap,
    pub ego: &'a VehicleParams,
    pub obstacle: &'a VehicleParams,
    pub behavior: &'a BehaviorParams,
    pub observation: &'a ObservationParams,
    pub dt: f64,
}

/// X_t. The obstacle's intent lives in `obstacle_controller`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointState {
    pub system: SystemPose,
    pub belief: Belief,
    pub obstacle_controller: ControllerState,
    pub ego_controller: ControllerState,
}

impl JointState {
    pub fn new(system: SystemPose, intent: Intent, model: &Model<'_>) -> Self {
        let obstacle_controller =
            ControllerState::obstacle(intent, model.world, &model.obstacle.footprint, model.behavior);
        Self {
            system,
            belief: Belief::Unobserved,
            obstacle_controller,
            ego_controller: ControllerState::ego(model.behavior),
        }
    }

    pub fn intent(&self) -> Intent {
        self.obstacle_controller.intent
    }
}

/// Source of the ego's control inside the transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EgoCommand {
    /// The control the ego actually applied.
    Injected(ControlInput),
    /// Recompute h(ego, obstacle, Straight) from the state.
    Generative,
}

/// What happened inside one transition, for logging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionRecord {
    pub observation: Observation,
    pub obstacle_control: ControlInput,
    pub ego_control: ControlInput,
}

/// X_{t+1} = F(X_t): observe, update the belief, run both controllers and
/// step both vehicles with fresh process noise. `t` is the index of the
/// state being left.
///
/// Draw order is fixed: observation (1 uniform + 4 normals), obstacle noise
/// (2 normals), ego noise (2 normals).
pub fn transition<R: Rng + ?Sized>(
    state: &mut JointState,
    ego_command: EgoCommand,
    model: &Model<'_>,
    t: u32,
    rng: &mut R,
) -> TransitionRecord {
    let observation = observe(&state.system, model.world, model.observation, rng);
    state.belief = update_belief(&state.belief, &observation, t, model.dt, model.observation.stale);
    let (u_obs, obs_ctrl) = obstacle_control(
        &state.system.obstacle,
        &state.belief,
        &state.obstacle_controller,
        model.world,
        model.obstacle,
        &model.ego.footprint,
        model.behavior,
        model.dt,
    );
    state.obstacle_controller = obs_ctrl;
    let u_ego = match ego_command {
        EgoCommand::Injected(u) => u,
        EgoCommand::Generative => {
            let (u, ctrl) = ego_control(
                &state.system.ego,
                &state.system.obstacle,
                &state.ego_controller,
                model.world,
                model.ego,
                model.behavior,
            );
            state.ego_controller = ctrl;
            u
        }
    };
    let nu_obs = sample_noise(model.obstacle, rng);
    let nu_ego = sample_noise(model.ego, rng);
    state.system = SystemPose {
        obstacle: step(&state.system.obstacle, u_obs, nu_obs, model.obstacle, model.dt),
        ego: step(&state.system.ego, u_ego, nu_ego, model.ego, model.dt),
    };
    TransitionRecord {
        observation,
        obstacle_control: u_obs,
        ego_control: u_ego,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub state: JointState,
    pub weight: f64,
}

impl Particle {
    pub fn intent(&self) -> Intent {
        self.state.intent()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub t: u32,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// 1 / Σ w².
    pub fn effective_sample_size(&self) -> f64 {
        let s2: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        if s2 > 0.0 {
            1.0 / s2
        } else {
            0.0
        }
    }

    pub fn count(&self, intent: Intent) -> usize {
        self.particles.iter().filter(|p| p.intent() == intent).count()
    }
}

/// Probability over the obstacle's two intents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntentDistribution {
    pub turn_left: f64,
    pub turn_right: f64,
}

impl IntentDistribution {
    pub fn new(turn_left: f64, turn_right: f64) -> Self {
        Self { turn_left, turn_right }
    }

    pub fn left(p_left: f64) -> Self {
        Self::new(p_left, 1.0 - p_left)
    }

    pub fn get(&self, intent: Intent) -> f64 {
        match intent {
            Intent::TurnLeft => self.turn_left,
            Intent::TurnRight => self.turn_right,
            Intent::Straight => 0.0,
        }
    }

    /// Ties go to `TurnLeft`.
    pub fn map_intent(&self) -> Intent {
        if self.turn_left >= self.turn_right {
            Intent::TurnLeft
        } else {
            Intent::TurnRight
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("particle count must be at least 1")]
    NoParticles,
    #[error("intent prior must be non-negative and sum to 1, got ({left}, {right})")]
    InvalidPrior { left: f64, right: f64 },
}

/// Diagonal Gaussian likelihood over the 8 system-pose components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LikelihoodParams {
    pub sigma: [f64; 8],
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        let v = [0.3, 0.3, 0.05, 0.3];
        Self {
            sigma: [v[0], v[1], v[2], v[3], v[0], v[1], v[2], v[3]],
        }
    }
}

impl LikelihoodParams {
    pub fn is_valid(&self) -> bool {
        self.sigma.iter().all(|s| *s > 0.0 && s.is_finite())
    }

    /// Squared Mahalanobis distance; heading components wrap on the circle.
    pub fn mahalanobis2(&self, a: &SystemPose, b: &SystemPose) -> f64 {
        let a = a.to_array();
        let b = b.to_array();
        let mut acc = 0.0;
        for d in 0..8 {
            let mut diff = a[d] - b[d];
            if d == 2 || d == 6 {
                diff = wrap_angle(diff);
            }
            let z = diff / self.sigma[d];
            acc += z * z;
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResamplePolicy {
    EveryStep,
    /// Resample when ESS drops below this fraction of N.
    EssBelow(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    pub n_particles: usize,
    pub likelihood: LikelihoodParams,
    pub resample: ResamplePolicy,
    /// Alarm when P(imminent) exceeds this.
    pub threshold: f64,
    /// Only ego arrivals within this many seconds count as imminent.
    pub horizon: f64,
    /// When false the particles recompute the ego's control themselves.
    pub inject_ego_control: bool,
    /// Fraction of particles reserved per intent at initialisation.
    pub intent_floor: f64,
    /// Filter prior P(left); `None` uses the scenario's `p_left`.
    pub prior_left: Option<f64>,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            likelihood: LikelihoodParams::default(),
            resample: ResamplePolicy::EveryStep,
            threshold: 0.5,
            horizon: 4.0,
            inject_ego_control: true,
            intent_floor: 0.01,
            prior_left: Some(0.5),
        }
    }
}

/// Draws N particles at the first measurement with intents from `prior`.
///
/// Every intent with positive prior mass keeps at least
/// `ceil(floor * N)` particles.
pub fn init_particles<R: Rng + ?Sized>(
    n: usize,
    first_measurement: &SystemPose,
    prior: &IntentDistribution,
    floor: f64,
    model: &Model<'_>,
    rng: &mut R,
) -> Result<ParticleSet, FilterError> {
    if n == 0 {
        return Err(FilterError::NoParticles);
    }
    let (l, r) = (prior.turn_left, prior.turn_right);
    if !(l >= 0.0 && r >= 0.0) || (l + r - 1.0).abs() > 1e-9 {
        return Err(FilterError::InvalidPrior { left: l, right: r });
    }
    let mut intents: Vec<Intent> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if u < l {
                Intent::TurnLeft
            } else {
                Intent::TurnRight
            }
        })
        .collect();
    if l > 0.0 && r > 0.0 && n >= 2 {
        let min_count = (crate::math::ceil(floor * n as f64) as usize).clamp(1, n / 2);
        for (minor, major) in [
            (Intent::TurnLeft, Intent::TurnRight),
            (Intent::TurnRight, Intent::TurnLeft),
        ] {
            let mut have = intents.iter().filter(|i| **i == minor).count();
            for slot in intents.iter_mut().rev() {
                if have >= min_count {
                    break;
                }
                if *slot == major {
                    *slot = minor;
                    have += 1;
                }
            }
        }
    }
    let w = 1.0 / n as f64;
    let particles = intents
        .into_iter()
        .map(|intent| Particle {
            state: JointState::new(*first_measurement, intent, model),
            weight: w,
        })
        .collect();
    Ok(ParticleSet { particles, t: 0 })
}

/// Moves every particle one step through F. Weights are untouched.
pub fn propagate<R: Rng + ?Sized>(ps: &mut ParticleSet, ego_command: EgoCommand, model: &Model<'_>, rng: &mut R) {
    let t = ps.t;
    for p in &mut ps.particles {
        transition(&mut p.state, ego_command, model, t, rng);
    }
    ps.t += 1;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeighReport {
    /// Every raw weight underflowed; weights were reset to uniform.
    pub degenerate: bool,
    pub ess: f64,
}

/// Multiplies each weight by the Gaussian likelihood of the measured system
/// pose and normalises.
pub fn weigh(ps: &mut ParticleSet, measured: &SystemPose, lp: &LikelihoodParams) -> WeighReport {
    let mut total = 0.0;
    for p in &mut ps.particles {
        let d2 = lp.mahalanobis2(&p.state.system, measured);
        p.weight *= exp(-0.5 * d2);
        total += p.weight;
    }
    let degenerate = !(total.is_finite() && total > 0.0);
    if degenerate {
        let w = 1.0 / ps.len() as f64;
        for p in &mut ps.particles {
            p.weight = w;
        }
    } else {
        for p in &mut ps.particles {
            p.weight /= total;
        }
    }
    WeighReport {
        degenerate,
        ess: ps.effective_sample_size(),
    }
}

/// Index of the particle selected at each systematic position `u + k/N`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for k in 0..n {
        let position = u + k as f64 * step;
        while position >= cumulative && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        out.push(j);
    }
    out
}

/// Low-variance resampling; output weights are exactly 1/N.
pub fn resample_stratified<R: Rng + ?Sized>(ps: &mut ParticleSet, rng: &mut R) {
    let n = ps.len();
    let u: f64 = rng.random::<f64>() / n as f64;
    let weights: Vec<f64> = ps.particles.iter().map(|p| p.weight).collect();
    let picks = systematic_indices(&weights, u);
    let w = 1.0 / n as f64;
    let resampled = picks
        .into_iter()
        .map(|i| Particle {
            state: ps.particles[i].state,
            weight: w,
        })
        .collect();
    ps.particles = resampled;
}

pub fn intent_posterior(ps: &ParticleSet) -> IntentDistribution {
    let mut left = 0.0;
    let mut right = 0.0;
    for p in &ps.particles {
        match p.intent() {
            Intent::TurnLeft => left += p.weight,
            _ => right += p.weight,
        }
    }
    let total = left + right;
    IntentDistribution::new(left / total, right / total)
}

/// Posterior mass of the imminent-collision event and of its clauses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImminentAssessment {
    pub imminent: bool,
    pub p: f64,
    pub p_left: f64,
    pub p_believed_clear: f64,
    pub p_proceeding: f64,
    pub p_in_horizon: f64,
}

/// Whether the obstacle in `state` is committed to the turn and has not yet
/// left the conflict zone.
fn proceeding_into_conflict(state: &JointState, model: &Model<'_>) -> bool {
    if state.obstacle_controller.yield_state != YieldState::Proceeding {
        return false;
    }
    let zone = model.world.conflict();
    let rear = zone.along(state.system.obstacle.position()) - model.obstacle.footprint.rear_axle_offset;
    rear <= zone.end
}

/// Whether the particle's driver goes, or went, on a belief that the way is
/// clear. A committed driver is judged by the belief it decided on, since
/// later sightings no longer change what it does.
fn decided_on_clear(state: &JointState, model: &Model<'_>, gap: f64) -> bool {
    let ctrl = &state.obstacle_controller;
    match ctrl.yield_state {
        YieldState::Proceeding => !ctrl.yielded,
        YieldState::Yielding => false,
        _ => believed_clear(&state.belief, Intent::TurnLeft, model.world, &model.ego.footprint, gap),
    }
}

/// p = P(intent = left ∧ believed clear ∧ proceeding ∧ ego due within
/// `horizon`). The alarm fires when p > `threshold`.
pub fn collision_imminent(ps: &ParticleSet, model: &Model<'_>, horizon: f64, threshold: f64) -> ImminentAssessment {
    let mut a = ImminentAssessment::default();
    let gap = model.behavior.gap_threshold;
    for p in &ps.particles {
        let s = &p.state;
        let left = s.intent() == Intent::TurnLeft;
        let clear = decided_on_clear(s, model, gap);
        let proceeding = proceeding_into_conflict(s, model);
        let in_horizon = time_to_conflict(model.world, &s.system.ego, &model.ego.footprint)
            .seconds()
            .is_some_and(|t| t <= horizon);
        if left {
            a.p_left += p.weight;
        }
        if clear {
            a.p_believed_clear += p.weight;
        }
        if proceeding {
            a.p_proceeding += p.weight;
        }
        if in_horizon {
            a.p_in_horizon += p.weight;
        }
        if left && clear && proceeding && in_horizon {
            a.p += p.weight;
        }
    }
    a.imminent = a.p > threshold;
    a
}
