//! Bicycle kinematics with noisy acceleration and steering realisation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{cos, sin, tan, wrap_angle};
use crate::world::{Footprint, Vec2};

/// Rear-axle pose of one vehicle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-π, π]`.
    pub theta: f64,
    /// Speed, never negative.
    pub v: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            v,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.v]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput {
    /// m/s².
    pub accel: f64,
    /// Front-wheel angle, rad.
    pub steer: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProcessNoise {
    pub accel_noise: f64,
    pub steer_noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub footprint: Footprint,
    pub max_brake: f64,
    pub max_accel: f64,
    pub max_steer: f64,
    pub accel_noise_std: f64,
    pub steer_noise_std: f64,
}

/// 16 ft/s² in m/s².
pub const MAX_BRAKE_16_FT_S2: f64 = 16.0 * 0.3048;

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            footprint: Footprint::default(),
            max_brake: MAX_BRAKE_16_FT_S2,
            max_accel: 3.0,
            max_steer: 0.55,
            accel_noise_std: 0.3,
            steer_noise_std: 0.02,
        }
    }
}

impl VehicleParams {
    pub fn is_valid(&self) -> bool {
        self.wheelbase > 0.0
            && self.wheelbase.is_finite()
            && self.footprint.is_valid()
            && self.max_brake > 0.0
            && self.max_accel > 0.0
            && self.max_steer > 0.0
            && self.accel_noise_std >= 0.0
            && self.steer_noise_std >= 0.0
            && self.accel_noise_std.is_finite()
            && self.steer_noise_std.is_finite()
    }

    /// Clamps a command to the actuator limits.
    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            accel: u.accel.clamp(-self.max_brake, self.max_accel),
            steer: u.steer.clamp(-self.max_steer, self.max_steer),
        }
    }
}

/// One bicycle-model step. The command is clamped to `params` before the
/// noise is added; speed is clamped at zero afterwards.
pub fn step(pose: &VehiclePose, u: ControlInput, nu: ProcessNoise, params: &VehicleParams, dt: f64) -> VehiclePose {
    let u = params.clamp(u);
    let travel = pose.v * dt;
    let x = pose.x + travel * cos(pose.theta);
    let y = pose.y + travel * sin(pose.theta);
    let theta = pose.theta + travel / params.wheelbase * tan(u.steer + nu.steer_noise);
    let v = pose.v + (u.accel + nu.accel_noise) * dt;
    VehiclePose {
        x,
        y,
        theta: wrap_angle(theta),
        v: v.max(0.0),
    }
}

/// Noise-free, zero-input step: straight line at constant speed.
pub fn coast(pose: &VehiclePose, dt: f64) -> VehiclePose {
    let travel = pose.v * dt;
    VehiclePose {
        x: pose.x + travel * cos(pose.theta),
        y: pose.y + travel * sin(pose.theta),
        theta: pose.theta,
        v: pose.v,
    }
}

/// Always consumes two standard-normal draws, even for zero stds.
pub fn sample_noise<R: Rng + ?Sized>(params: &VehicleParams, rng: &mut R) -> ProcessNoise {
    let za: f64 = rng.sample(StandardNormal);
    let zs: f64 = rng.sample(StandardNormal);
    ProcessNoise {
        accel_noise: params.accel_noise_std * za,
        steer_noise: params.steer_noise_std * zs,
    }
}
