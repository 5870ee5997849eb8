//! Reconstruction of the policy-visible state from emulated sensors.

pub mod ekf;
pub mod madgwick;
pub mod sensors;

use nalgebra::{UnitQuaternion, Vector3};

use crate::dynamics::RobotState;
use crate::wire::WireGeometry;
use ekf::EkfBelief;
use madgwick::{madgwick_update, OrientationEstimate, DEFAULT_BETA};
use sensors::SensorReadings;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub p_dot: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// World frame.
    pub omega: Vector3<f64>,
    pub q: Vector3<f64>,
    pub q_dot: Vector3<f64>,
}

/// EKF for the joints, Madgwick for the body attitude, VO for body velocity.
#[derive(Debug, Clone)]
pub struct StateConverter {
    pub ekf: EkfBelief,
    pub attitude: OrientationEstimate,
    pub beta: f64,
}

impl StateConverter {
    pub fn at_truth(state: &RobotState) -> Self {
        Self {
            ekf: EkfBelief::at(&state.q, &state.q_dot),
            attitude: OrientationEstimate { q: state.quaternion() },
            beta: DEFAULT_BETA,
        }
    }

    pub fn update(&mut self, readings: &SensorReadings, geometry: &WireGeometry, dt: f64) -> StateEstimate {
        self.ekf.predict(dt);
        self.ekf.update(geometry, &readings.wires.stacked());
        self.attitude = madgwick_update(&self.attitude, &readings.imu, dt, self.beta);
        let q = self.attitude.q;
        StateEstimate {
            p_dot: readings.vo_velocity,
            orientation: q,
            omega: q * readings.imu.gyro,
            q: self.ekf.q(),
            q_dot: self.ekf.q_dot(),
        }
    }
}
