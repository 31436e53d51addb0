//! Joint belief and intent inference for an obstacle vehicle at a T-intersection.
//!
//! The crate models two vehicles: an *ego* vehicle that drives through a
//! T-intersection with the right of way, and an *obstacle* vehicle that waits
//! at a stop sign on the stem road and then turns left (across the ego's lane)
//! or right. The obstacle's driver acts on a point *belief* about the ego,
//! which is only refreshed when the ego is in line of sight and a Bernoulli
//! observation succeeds. The ego runs a particle filter over the joint state
//! `[system pose, belief, intent]` and predicts imminent collisions from it.
//!
//! Modules, bottom-up:
//!
//! - [`world`]: intersection geometry, reference paths, line-of-sight and
//!   footprint collision queries.
//! - [`dynamics`]: bicycle kinematics with noisy acceleration and steering.
//! - [`behavior`]: pure-pursuit path following and the obstacle's yield FSM.
//! - [`perception`]: the obstacle's observation channel and belief update.
//! - [`inference`]: the particle filter and the imminent-collision predicate.
//! - [`harness`]: episode simulation, counterfactual labelling and
//!   experiment aggregation.
//!
//! The crate is `#![no_std]` and only needs `alloc`. File formats, the CLI and
//! parallel experiment execution live in the `cdf-cli` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod behavior;
pub mod dynamics;
pub mod harness;
pub mod inference;
mod math;
pub mod perception;
pub mod rng;
pub mod world;

pub use behavior::{BehaviorParams, ControllerState, Intent, YieldState};
pub use dynamics::{ControlInput, ProcessNoise, VehicleParams, VehiclePose};
pub use harness::{EpisodeResult, ExperimentSummary, Label, Mode, ScenarioConfig, ScenarioError};
pub use inference::{FilterParams, IntentDistribution, LikelihoodParams, Particle, ParticleSet, SystemPose};
pub use perception::{Belief, Observation, ObservationParams};
pub use world::{Footprint, LaneId, Path, WorldConfig, WorldError, WorldMap};
