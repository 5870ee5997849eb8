//! Gradient-descent IMU orientation filter.
//!
//! The quaternion maps body coordinates to world coordinates, so gravity
//! seen by the accelerometer at rest is `R^T e_z`.

use nalgebra::{Matrix3x4, Quaternion, UnitQuaternion, Vector3, Vector4};

pub const DEFAULT_BETA: f64 = 0.1;
/// Specific-force magnitude below which the accelerometer carries no usable
/// gravity direction (ballistic flight) and only the gyro is integrated.
pub const MIN_ACCEL_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEstimate {
    pub q: UnitQuaternion<f64>,
}

impl Default for OrientationEstimate {
    fn default() -> Self {
        Self { q: UnitQuaternion::identity() }
    }
}

impl OrientationEstimate {
    /// Components in w, x, y, z order.
    pub fn wxyz(&self) -> [f64; 4] {
        [self.q.w, self.q.i, self.q.j, self.q.k]
    }
}

pub fn madgwick_update(est: &OrientationEstimate, imu: &ImuSample, dt: f64, beta: f64) -> OrientationEstimate {
    let q = est.q.into_inner();
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let omega = Quaternion::new(0.0, imu.gyro.x, imu.gyro.y, imu.gyro.z);
    let mut q_dot = (q * omega).coords * 0.5;

    let a_norm = imu.accel.norm();
    if a_norm >= MIN_ACCEL_NORM {
        let a = imu.accel / a_norm;
        let f = Vector3::new(
            2.0 * (x * z - w * y) - a.x,
            2.0 * (w * x + y * z) - a.y,
            2.0 * (0.5 - x * x - y * y) - a.z,
        );
        // columns ordered as quaternion coords (x, y, z, w)
        #[rustfmt::skip]
        let j = Matrix3x4::new(
             2.0 * z, -2.0 * w,  2.0 * x, -2.0 * y,
             2.0 * w,  2.0 * z,  2.0 * y,  2.0 * x,
            -4.0 * x, -4.0 * y,  0.0,      0.0,
        );
        let step: Vector4<f64> = j.transpose() * f;
        let n = step.norm();
        if n > 0.0 {
            q_dot -= step * (beta / n);
        }
    }
    let next = Quaternion::from(q.coords + q_dot * dt);
    OrientationEstimate { q: UnitQuaternion::from_quaternion(next) }
}
