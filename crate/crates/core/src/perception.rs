//! The obstacle driver's observation channel and point belief.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{coast, VehiclePose};
use crate::inference::SystemPose;
use crate::math::wrap_angle;
use crate::world::{isovist_contains, WorldMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observation {
    Nothing,
    Ego(VehiclePose),
}

impl Observation {
    pub fn pose(&self) -> Option<&VehiclePose> {
        match self {
            Observation::Nothing => None,
            Observation::Ego(p) => Some(p),
        }
    }
}

/// A point estimate of the ego pose, absent until the first sighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Belief {
    Unobserved,
    Observed { pose: VehiclePose, last_updated: u32 },
}

impl Belief {
    pub fn pose(&self) -> Option<&VehiclePose> {
        match self {
            Belief::Unobserved => None,
            Belief::Observed { pose, .. } => Some(pose),
        }
    }

    pub fn is_observed(&self) -> bool {
        matches!(self, Belief::Observed { .. })
    }
}

/// How a belief evolves on ticks without an observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaleBelief {
    /// Constant speed and heading.
    Extrapolate,
    Freeze,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationParams {
    /// Per-tick probability of seeing a visible ego.
    pub beta: f64,
    /// Noise stds for (x, y, θ, v).
    pub noise_std: [f64; 4],
    pub stale: StaleBelief,
}

impl Default for ObservationParams {
    fn default() -> Self {
        Self {
            beta: 0.05,
            noise_std: [0.5, 0.5, 0.05, 0.5],
            stale: StaleBelief::Extrapolate,
        }
    }
}

impl ObservationParams {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.beta) && self.noise_std.iter().all(|s| *s >= 0.0 && s.is_finite())
    }
}

/// O_t = k(S_t, β, e_t).
///
/// Consumes one uniform and four normal draws on every call so the stream
/// position does not depend on what was seen.
pub fn observe<R: Rng + ?Sized>(
    system: &SystemPose,
    world: &WorldMap,
    params: &ObservationParams,
    rng: &mut R,
) -> Observation {
    let u: f64 = rng.random();
    let mut e = [0.0; 4];
    for (e, std) in e.iter_mut().zip(params.noise_std) {
        let z: f64 = rng.sample(StandardNormal);
        *e = std * z;
    }
    if !isovist_contains(world, &system.obstacle, &system.ego) || u >= params.beta {
        return Observation::Nothing;
    }
    let ego = &system.ego;
    Observation::Ego(VehiclePose {
        x: ego.x + e[0],
        y: ego.y + e[1],
        theta: wrap_angle(ego.theta + e[2]),
        v: (ego.v + e[3]).max(0.0),
    })
}

/// B_{t+1} = g(B_t, O_{t+1}).
pub fn update_belief(belief: &Belief, obs: &Observation, t: u32, dt: f64, stale: StaleBelief) -> Belief {
    match (obs, belief) {
        (Observation::Ego(pose), _) => Belief::Observed {
            pose: *pose,
            last_updated: t,
        },
        (Observation::Nothing, Belief::Unobserved) => Belief::Unobserved,
        (Observation::Nothing, Belief::Observed { pose, last_updated }) => Belief::Observed {
            pose: match stale {
                StaleBelief::Extrapolate => coast(pose, dt),
                StaleBelief::Freeze => *pose,
            },
            last_updated: *last_updated,
        },
    }
}
