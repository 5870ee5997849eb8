//! Emulated IMU, wire encoders and visual odometry.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::madgwick::ImuSample;
use crate::dynamics::RobotState;
use crate::wire::{WireGeometry, WireState};

/// Sensor noise, all stored as variances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorNoise {
    pub accel_var: f64,
    pub gyro_var: f64,
    pub length_var: f64,
    pub length_rate_var: f64,
    pub vo_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorReadings {
    pub imu: ImuSample,
    pub wires: WireState,
    pub vo_velocity: Vector3<f64>,
}

/// One zero-mean Gaussian draw of the given variance; zero variance consumes
/// no randomness.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> f64 {
    if var > 0.0 {
        Normal::new(0.0, var.sqrt()).expect("finite variance").sample(rng)
    } else {
        0.0
    }
}

pub fn gaussian_vec3<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Vector3<f64> {
    let x = gaussian(rng, var);
    let y = gaussian(rng, var);
    let z = gaussian(rng, var);
    Vector3::new(x, y, z)
}

/// `a_world` is the body's world-frame acceleration over the last tick.
pub fn emulate_sensors<R: Rng + ?Sized>(
    state: &RobotState,
    a_world: &Vector3<f64>,
    gravity: f64,
    geometry: &WireGeometry,
    noise: &SensorNoise,
    rng: &mut R,
) -> SensorReadings {
    let rt = state.r.transpose();
    let accel = rt * (a_world + Vector3::z() * gravity) + gaussian_vec3(rng, noise.accel_var);
    let gyro = rt * state.omega + gaussian_vec3(rng, noise.gyro_var);
    let mut wires = geometry.wire_state(&state.q, &state.q_dot);
    for l in wires.l.iter_mut() {
        *l += gaussian(rng, noise.length_var);
    }
    for l in wires.l_dot.iter_mut() {
        *l += gaussian(rng, noise.length_rate_var);
    }
    let vo_velocity = state.p_dot + gaussian_vec3(rng, noise.vo_var);
    SensorReadings { imu: ImuSample { accel, gyro }, wires, vo_velocity }
}
