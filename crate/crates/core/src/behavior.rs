//! Intent-conditioned controllers.
//!
//! Both vehicles follow their reference path with pure pursuit. The ego
//! tracks a cruise speed and sees the true system pose. The obstacle runs a
//! small stop-sign state machine whose gap check reads only its belief about
//! the ego; the true ego pose never reaches [`obstacle_control`].

use crate::dynamics::{ControlInput, VehicleParams, VehiclePose};
use crate::math::{atan2, sin, sqrt};
use crate::perception::Belief;
use crate::world::{Footprint, WorldMap};

/// Discriminants index [`WorldMap`]'s path table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Intent {
    Straight = 0,
    TurnLeft = 1,
    TurnRight = 2,
}

impl Intent {
    pub const OBSTACLE: [Intent; 2] = [Intent::TurnLeft, Intent::TurnRight];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Straight => "straight",
            Intent::TurnLeft => "left",
            Intent::TurnRight => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum YieldState {
    Approaching,
    HoldingAtStop,
    Proceeding,
    Yielding,
}

impl YieldState {
    pub fn as_str(self) -> &'static str {
        match self {
            YieldState::Approaching => "approaching",
            YieldState::HoldingAtStop => "holding",
            YieldState::Proceeding => "proceeding",
            YieldState::Yielding => "yielding",
        }
    }

    /// The permitted transition relation (self-loops included).
    pub fn may_transition_to(self, next: YieldState) -> bool {
        use YieldState::*;
        self == next
            || matches!(
                (self, next),
                (Approaching, HoldingAtStop)
                    | (HoldingAtStop, Proceeding)
                    | (HoldingAtStop, Yielding)
                    | (Yielding, Proceeding)
            )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BehaviorParams {
    /// Believed time-to-conflict below which a left turner yields, s.
    pub gap_threshold: f64,
    pub lookahead_min: f64,
    /// Lookahead per unit speed, s.
    pub lookahead_gain: f64,
    /// Proportional speed gain, 1/s.
    pub speed_gain: f64,
    pub ego_target_speed: f64,
    /// Obstacle speed limit while approaching the stop line.
    pub approach_speed: f64,
    /// Obstacle cruise speed once it proceeds.
    pub cruise_speed: f64,
    /// Deceleration used to plan the stop at the line.
    pub stop_decel: f64,
    /// Distance to the stop point (m) at which the obstacle counts as stopped
    /// once slower than `stop_speed`.
    pub stop_tolerance: f64,
    pub stop_speed: f64,
    /// Minimum dwell at the stop line before the gap check runs, s.
    pub min_hold_time: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            gap_threshold: 4.0,
            lookahead_min: 3.0,
            lookahead_gain: 0.8,
            speed_gain: 1.5,
            ego_target_speed: 13.4,
            approach_speed: 6.0,
            cruise_speed: 10.0,
            stop_decel: 2.5,
            stop_tolerance: 0.5,
            stop_speed: 0.3,
            min_hold_time: 1.2,
        }
    }
}

/// The memory of h(): FSM state plus a path projection hint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerState {
    pub intent: Intent,
    pub yield_state: YieldState,
    pub target_speed: f64,
    /// Rear-axle arc length on the path where the vehicle should stop.
    pub stop_arc: f64,
    pub hold_ticks: u32,
    /// Set once the driver has yielded; a later Proceeding then rests on a
    /// belief that the ego has passed rather than on a clear gap.
    pub yielded: bool,
    pub path_hint: usize,
}

impl ControllerState {
    pub fn ego(params: &BehaviorParams) -> Self {
        Self {
            intent: Intent::Straight,
            yield_state: YieldState::Proceeding,
            target_speed: params.ego_target_speed,
            stop_arc: f64::INFINITY,
            hold_ticks: 0,
            yielded: false,
            path_hint: 0,
        }
    }

    pub fn obstacle(intent: Intent, world: &WorldMap, footprint: &Footprint, params: &BehaviorParams) -> Self {
        debug_assert!(intent != Intent::Straight);
        Self {
            intent,
            yield_state: YieldState::Approaching,
            target_speed: params.cruise_speed,
            stop_arc: world.stop_arc(intent, footprint),
            hold_ticks: 0,
            yielded: false,
            path_hint: 0,
        }
    }
}

/// Where a vehicle on the ego lane stands relative to the conflict zone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConflictTiming {
    /// Seconds until the front bumper reaches the zone; infinite when stopped.
    Approaching(f64),
    Inside,
    Passed,
}

impl ConflictTiming {
    /// Seconds to the zone; zero inside, `None` once passed.
    pub fn seconds(self) -> Option<f64> {
        match self {
            ConflictTiming::Approaching(t) => Some(t),
            ConflictTiming::Inside => Some(0.0),
            ConflictTiming::Passed => None,
        }
    }
}

pub fn time_to_conflict(world: &WorldMap, pose: &VehiclePose, footprint: &Footprint) -> ConflictTiming {
    let zone = world.conflict();
    let s = zone.along(pose.position());
    let front = s + footprint.front_overhang();
    let rear = s - footprint.rear_axle_offset;
    if rear > zone.end {
        ConflictTiming::Passed
    } else if front >= zone.start {
        ConflictTiming::Inside
    } else if pose.v > 1e-9 {
        ConflictTiming::Approaching((zone.start - front) / pose.v)
    } else {
        ConflictTiming::Approaching(f64::INFINITY)
    }
}

/// The gap rule evaluated on the belief: `true` means clear to go.
pub fn believed_clear(
    belief: &Belief,
    intent: Intent,
    world: &WorldMap,
    ego_footprint: &Footprint,
    gap_threshold: f64,
) -> bool {
    if intent == Intent::TurnRight {
        return true;
    }
    match belief.pose() {
        None => true,
        Some(ego) => match time_to_conflict(world, ego, ego_footprint) {
            ConflictTiming::Passed => true,
            ConflictTiming::Inside => false,
            ConflictTiming::Approaching(t) => t > gap_threshold,
        },
    }
}

fn believed_passed(belief: &Belief, world: &WorldMap, ego_footprint: &Footprint) -> bool {
    belief
        .pose()
        .is_some_and(|ego| time_to_conflict(world, ego, ego_footprint) == ConflictTiming::Passed)
}

/// Pure-pursuit steering toward the path. Returns the steering angle and
/// the updated projection hint.
pub fn pure_pursuit(
    pose: &VehiclePose,
    world: &WorldMap,
    state: &ControllerState,
    vehicle: &VehicleParams,
    params: &BehaviorParams,
) -> (f64, usize, f64) {
    let path = world.path(state.intent);
    let (hint, s) = path.project(pose.position(), state.path_hint);
    let lookahead = params.lookahead_min.max(params.lookahead_gain * pose.v);
    let target = path.point_at(s + lookahead);
    let d = target - pose.position();
    let dist = d.norm();
    if dist < 1e-9 {
        return (0.0, hint, s);
    }
    let alpha = atan2(d.y, d.x) - pose.theta;
    let steer = atan2(2.0 * vehicle.wheelbase * sin(alpha), dist);
    (steer.clamp(-vehicle.max_steer, vehicle.max_steer), hint, s)
}

fn track_speed(v: f64, target: f64, vehicle: &VehicleParams, params: &BehaviorParams) -> f64 {
    (params.speed_gain * (target - v)).clamp(-vehicle.max_brake, vehicle.max_accel)
}

/// Ego controller h(ego, obstacle, Straight).
///
/// The right-of-way ego does not react to the obstacle here; evasive braking
/// is commanded by the harness.
pub fn ego_control(
    ego: &VehiclePose,
    _obstacle: &VehiclePose,
    state: &ControllerState,
    world: &WorldMap,
    vehicle: &VehicleParams,
    params: &BehaviorParams,
) -> (ControlInput, ControllerState) {
    let (steer, hint, _) = pure_pursuit(ego, world, state, vehicle, params);
    let accel = track_speed(ego.v, state.target_speed, vehicle, params);
    let mut next = *state;
    next.path_hint = hint;
    (ControlInput::new(accel, steer), next)
}

/// Obstacle controller h(obstacle, belief, intent).
#[allow(clippy::too_many_arguments)]
pub fn obstacle_control(
    obstacle: &VehiclePose,
    belief: &Belief,
    state: &ControllerState,
    world: &WorldMap,
    vehicle: &VehicleParams,
    ego_footprint: &Footprint,
    params: &BehaviorParams,
    dt: f64,
) -> (ControlInput, ControllerState) {
    let (steer, hint, s) = pure_pursuit(obstacle, world, state, vehicle, params);
    let mut next = *state;
    next.path_hint = hint;

    if next.yield_state == YieldState::Approaching {
        let remaining = state.stop_arc - s;
        if remaining <= params.stop_tolerance && obstacle.v <= params.stop_speed {
            next.yield_state = YieldState::HoldingAtStop;
            next.hold_ticks = 0;
            return (ControlInput::new(-vehicle.max_brake, steer), next);
        } else {
            let v_des = params
                .approach_speed
                .min(sqrt(2.0 * params.stop_decel * remaining.max(0.0)));
            let accel = track_speed(obstacle.v, v_des, vehicle, params);
            // Stop short of the line rather than creep across it.
            let accel = if remaining <= 0.0 { -vehicle.max_brake } else { accel };
            return (ControlInput::new(accel, steer), next);
        }
    }

    if next.yield_state == YieldState::HoldingAtStop {
        next.hold_ticks += 1;
        if (next.hold_ticks as f64) * dt + 1e-9 < params.min_hold_time {
            return (ControlInput::new(-vehicle.max_brake, steer), next);
        }
        next.yield_state = if believed_clear(belief, state.intent, world, ego_footprint, params.gap_threshold) {
            YieldState::Proceeding
        } else {
            next.yielded = true;
            YieldState::Yielding
        };
    } else if next.yield_state == YieldState::Yielding && believed_passed(belief, world, ego_footprint) {
        next.yield_state = YieldState::Proceeding;
    }

    match next.yield_state {
        YieldState::Proceeding => {
            let accel = track_speed(obstacle.v, state.target_speed, vehicle, params);
            (ControlInput::new(accel, steer), next)
        }
        _ => (ControlInput::new(-vehicle.max_brake, steer), next),
    }
}
