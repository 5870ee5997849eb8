//! Geometric model of the six antagonistic wires.
//!
//! Each wire runs straight from an anchor on the body to an anchor on the leg.
//! `g(q)` gives the six lengths and `G(q) = dg/dq` the muscle Jacobian; wire
//! tensions map to joint torques through `tau = -G^T f`.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::{leg_point_in_body, leg_point_jacobian};
use crate::kv::{self, KvMap};

pub const N_WIRES: usize = 6;

pub type Vector6 = SVector<f64, 6>;
pub type MuscleJacobian = SMatrix<f64, 6, 3>;

#[derive(Debug, Clone, PartialEq)]
pub struct WireGeometry {
    /// Anchors fixed on the body, in the body frame.
    pub body_anchors: [Vector3<f64>; N_WIRES],
    /// Anchors fixed on the leg, in leg coordinates measured from the foot tip.
    pub leg_anchors: [Vector3<f64>; N_WIRES],
    /// Must equal the plant's `SimConfig::foot_offset`.
    pub foot_offset: f64,
}

impl Default for WireGeometry {
    /// Reference layout: body anchors every 60° on a 0.20 m circle just below
    /// the gimbal; leg anchors at the same azimuths on 0.05 m circles,
    /// alternating between the top of the leg (even wires, which extend the
    /// slide when pulled) and the foot (odd wires, which retract it). Within each ring
    /// the three wires oppose each other about both rotation axes.
    fn default() -> Self {
        Self::ring_layout(0.20, -0.03, 0.05, 1.05, 0.0, 1.063)
    }
}

impl WireGeometry {
    pub fn ring_layout(
        body_radius: f64,
        body_z: f64,
        leg_radius: f64,
        upper_z: f64,
        lower_z: f64,
        foot_offset: f64,
    ) -> Self {
        let angle = |i: usize| i as f64 * std::f64::consts::FRAC_PI_3;
        let body_anchors =
            std::array::from_fn(|i| Vector3::new(body_radius * angle(i).cos(), body_radius * angle(i).sin(), body_z));
        let leg_anchors = std::array::from_fn(|i| {
            let z = if i % 2 == 0 { upper_z } else { lower_z };
            Vector3::new(leg_radius * angle(i).cos(), leg_radius * angle(i).sin(), z)
        });
        Self { body_anchors, leg_anchors, foot_offset }
    }

    /// Slide position at which the reference layout is point-symmetric
    /// (all six wires have equal length).
    pub fn home_slide(&self) -> f64 {
        let upper = self.leg_anchors[0].z;
        let lower = self.leg_anchors[1].z;
        self.foot_offset + self.body_anchors[0].z - 0.5 * (upper + lower)
    }

    pub fn home_pose(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.home_slide())
    }

    fn wire_vector(&self, i: usize, q: &Vector3<f64>) -> Vector3<f64> {
        leg_point_in_body(q, &self.leg_anchors[i], self.foot_offset) - self.body_anchors[i]
    }

    pub fn wire_lengths(&self, q: &Vector3<f64>) -> Vector6 {
        Vector6::from_fn(|i, _| self.wire_vector(i, q).norm())
    }

    /// Analytic `dg/dq`: unit wire direction times the leg-anchor Jacobian.
    pub fn muscle_jacobian(&self, q: &Vector3<f64>) -> MuscleJacobian {
        let mut g = MuscleJacobian::zeros();
        for i in 0..N_WIRES {
            let dir = self.wire_vector(i, q).normalize();
            let j = leg_point_jacobian(q, &self.leg_anchors[i], self.foot_offset);
            g.set_row(i, &(dir.transpose() * j));
        }
        g
    }

    pub fn torque_from_tensions(&self, q: &Vector3<f64>, f: &Vector6) -> Vector3<f64> {
        -(self.muscle_jacobian(q).transpose() * f)
    }

    pub fn wire_state(&self, q: &Vector3<f64>, q_dot: &Vector3<f64>) -> WireState {
        WireState {
            l: self.wire_lengths(q),
            l_dot: self.muscle_jacobian(q) * q_dot,
        }
    }

    pub fn read_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.set("wire.foot_offset", &mut self.foot_offset)?;
        for i in 0..N_WIRES {
            kv.set_vec3(&format!("wire.body_anchor.{i}"), &mut self.body_anchors[i])?;
            kv.set_vec3(&format!("wire.leg_anchor.{i}"), &mut self.leg_anchors[i])?;
        }
        Ok(())
    }

    pub fn write_kv(&self, out: &mut String) {
        kv::write_f64(out, "wire.foot_offset", self.foot_offset);
        for i in 0..N_WIRES {
            kv::write_vec3(out, &format!("wire.body_anchor.{i}"), &self.body_anchors[i]);
            kv::write_vec3(out, &format!("wire.leg_anchor.{i}"), &self.leg_anchors[i]);
        }
    }
}

/// Wire lengths and length rates as measured by the winding encoders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireState {
    pub l: Vector6,
    pub l_dot: Vector6,
}

impl WireState {
    pub fn stacked(&self) -> SVector<f64, 12> {
        let mut y = SVector::<f64, 12>::zeros();
        y.fixed_rows_mut::<6>(0).copy_from(&self.l);
        y.fixed_rows_mut::<6>(6).copy_from(&self.l_dot);
        y
    }
}
