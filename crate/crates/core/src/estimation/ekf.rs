//! Joint-state EKF driven by wire lengths and wire velocities.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::wire::{MuscleJacobian, WireGeometry, N_WIRES};

pub type StateVector = SVector<f64, 6>;
pub type Covariance = SMatrix<f64, 6, 6>;
pub type Measurement = SVector<f64, 12>;
pub type MeasurementCovariance = SMatrix<f64, 12, 12>;
pub type ObservationJacobian = SMatrix<f64, 12, 6>;

/// Central-difference step for the derivative of `G(q) q_dot`.
pub const JACOBIAN_FD_STEP: f64 = 1e-6;

/// Observation model `y = h(x)` with `x = (q, q_dot)`.
pub trait MeasurementModel {
    fn predict(&self, x: &StateVector) -> Measurement;
    fn jacobian(&self, x: &StateVector) -> ObservationJacobian;
}

impl MeasurementModel for WireGeometry {
    fn predict(&self, x: &StateVector) -> Measurement {
        let q = x.fixed_rows::<3>(0).into_owned();
        let q_dot = x.fixed_rows::<3>(3).into_owned();
        self.wire_state(&q, &q_dot).stacked()
    }

    fn jacobian(&self, x: &StateVector) -> ObservationJacobian {
        let q: Vector3<f64> = x.fixed_rows::<3>(0).into_owned();
        let q_dot: Vector3<f64> = x.fixed_rows::<3>(3).into_owned();
        let g = self.muscle_jacobian(&q);
        let mut h = ObservationJacobian::zeros();
        h.fixed_view_mut::<N_WIRES, 3>(0, 0).copy_from(&g);
        h.fixed_view_mut::<N_WIRES, 3>(N_WIRES, 3).copy_from(&g);
        for j in 0..3 {
            let mut dq = Vector3::zeros();
            dq[j] = JACOBIAN_FD_STEP;
            let plus = self.muscle_jacobian(&(q + dq)) * q_dot;
            let minus = self.muscle_jacobian(&(q - dq)) * q_dot;
            h.fixed_view_mut::<N_WIRES, 1>(N_WIRES, j)
                .copy_from(&((plus - minus) / (2.0 * JACOBIAN_FD_STEP)));
        }
        h
    }
}

/// Observation with a fixed muscle Jacobian: `y = (G q, G q_dot)`.
#[derive(Debug, Clone)]
pub struct LinearWireModel {
    pub g: MuscleJacobian,
}

impl MeasurementModel for LinearWireModel {
    fn predict(&self, x: &StateVector) -> Measurement {
        self.jacobian(x) * x
    }

    fn jacobian(&self, _x: &StateVector) -> ObservationJacobian {
        let mut h = ObservationJacobian::zeros();
        h.fixed_view_mut::<N_WIRES, 3>(0, 0).copy_from(&self.g);
        h.fixed_view_mut::<N_WIRES, 3>(N_WIRES, 3).copy_from(&self.g);
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfBelief {
    pub x: StateVector,
    pub p: Covariance,
    pub q_w: Covariance,
    pub r_v: MeasurementCovariance,
}

pub fn default_process_noise() -> Covariance {
    Covariance::from_diagonal(&StateVector::from_fn(|i, _| if i < 3 { 1e-6 } else { 1e-2 }))
}

pub fn default_measurement_noise() -> MeasurementCovariance {
    MeasurementCovariance::from_diagonal(&Measurement::from_fn(|i, _| if i < N_WIRES { 1e-6 } else { 1e-3 }))
}

impl EkfBelief {
    /// Belief centred on a known state with the default covariances.
    pub fn at(q: &Vector3<f64>, q_dot: &Vector3<f64>) -> Self {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(q);
        x.fixed_rows_mut::<3>(3).copy_from(q_dot);
        let q_w = default_process_noise();
        Self { x, p: q_w, q_w, r_v: default_measurement_noise() }
    }

    pub fn q(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn q_dot(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    pub fn transition(dt: f64) -> Covariance {
        let mut f = Covariance::identity();
        for i in 0..3 {
            f[(i, i + 3)] = dt;
        }
        f
    }

    pub fn predict(&mut self, dt: f64) {
        let f = Self::transition(dt);
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + self.q_w;
        self.symmetrize();
    }

    /// Joseph-form correction. Returns false (belief untouched) if the
    /// innovation covariance is not positive definite.
    pub fn update<M: MeasurementModel>(&mut self, model: &M, y: &Measurement) -> bool {
        let h = model.jacobian(&self.x);
        let innovation = y - model.predict(&self.x);
        let s = h * self.p * h.transpose() + self.r_v;
        let Some(chol) = s.cholesky() else { return false };
        let k = (chol.solve(&(h * self.p))).transpose();
        self.x += k * innovation;
        let ikh = Covariance::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * self.r_v * k.transpose();
        self.symmetrize();
        true
    }

    fn symmetrize(&mut self) {
        self.p = (self.p + self.p.transpose()) * 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_integrates_velocity() {
        let mut b = EkfBelief::at(&Vector3::zeros(), &Vector3::new(1.0, -2.0, 0.5));
        b.predict(0.01);
        assert_eq!(b.q(), Vector3::new(0.01, -0.02, 0.005));
        let mut still = EkfBelief::at(&Vector3::new(0.1, 0.2, 0.3), &Vector3::zeros());
        still.predict(0.5);
        assert_eq!(still.q(), Vector3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn predict_from_zero_covariance_adds_process_noise() {
        let mut b = EkfBelief::at(&Vector3::zeros(), &Vector3::zeros());
        b.p = Covariance::zeros();
        b.q_w = Covariance::identity() * 0.25;
        b.predict(0.01);
        assert_eq!(b.p, Covariance::identity() * 0.25);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let geo = WireGeometry::default();
        let mut b = EkfBelief::at(&geo.home_pose(), &Vector3::new(0.1, -0.1, 0.05));
        let y = geo.predict(&b.x);
        let before = b.clone();
        assert!(b.update(&geo, &y));
        assert!((b.x - before.x).amax() < 1e-15);
        assert!(b.p.trace() < before.p.trace());
    }

    #[test]
    fn analytic_block_matches_finite_difference_of_prediction() {
        let geo = WireGeometry::default();
        let x = StateVector::from_column_slice(&[0.2, -0.1, 0.5, 0.3, -0.4, 0.2]);
        let h = geo.jacobian(&x);
        for j in 0..6 {
            let mut dx = StateVector::zeros();
            dx[j] = 1e-5;
            let col = (geo.predict(&(x + dx)) - geo.predict(&(x - dx))) / 2e-5;
            assert!((h.column(j) - col).amax() < 1e-6, "column {j}");
        }
    }
}
