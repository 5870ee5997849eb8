//! The Basic comparison controller: a stance/flight state machine with
//! posture PD and energy shaping on the ground, slide hold and
//! velocity-proportional foot placement in the air.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::SimConfig;
use crate::error::{Error, Result};
use crate::estimation::StateEstimate;
use crate::kinematics::{leg_point_in_body, tilt_angles};
use crate::kv::{self, KvMap};

/// Consecutive disagreeing ticks needed to switch phase.
pub const DEBOUNCE_TICKS: u8 = 2;

/// Seed of the stored noiseless certificate run for the default gains.
pub const CERTIFICATE_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicGains {
    pub kp_posture: f64,
    pub kd_posture: f64,
    pub k_energy: f64,
    pub e_target: f64,
    pub k_raibert: f64,
    pub q_s_flight: f64,
    pub kp_slide: f64,
    pub kd_slide: f64,
    /// Joint-space PD tracking the foot-placement angles in flight.
    pub kp_swing: f64,
    pub kd_swing: f64,
    /// Slide speed assumed when the leg is at rest, so that the energy law
    /// can start a push from standstill.
    pub seed_speed: f64,
}

impl Default for BasicGains {
    /// Reference set from a noiseless grid search ranked by survival steps,
    /// then by jump count.
    fn default() -> Self {
        Self {
            kp_posture: 400.0,
            kd_posture: 40.0,
            k_energy: 40.0,
            e_target: 80.0,
            k_raibert: 0.1,
            q_s_flight: 0.35,
            kp_slide: 300.0,
            kd_slide: 2.0 * (10.0_f64 * 300.0).sqrt(),
            kp_swing: 200.0,
            kd_swing: 10.0,
            seed_speed: 0.5,
        }
    }
}

impl BasicGains {
    pub fn zero() -> Self {
        Self {
            kp_posture: 0.0,
            kd_posture: 0.0,
            k_energy: 0.0,
            e_target: 1.0,
            k_raibert: 0.0,
            q_s_flight: 0.0,
            kp_slide: 0.0,
            kd_slide: 0.0,
            kp_swing: 0.0,
            kd_swing: 0.0,
            seed_speed: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kp_posture,
            self.kd_posture,
            self.k_energy,
            self.e_target,
            self.k_raibert,
            self.q_s_flight,
            self.kp_slide,
            self.kd_slide,
            self.kp_swing,
            self.kd_swing,
            self.seed_speed,
        ];
        if all.iter().any(|g| !g.is_finite()) || !(self.e_target > 0.0) {
            return Err(Error::Config("basic gains must be finite with e_target > 0".into()));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.set("basic.kp_posture", &mut self.kp_posture)?;
        kv.set("basic.kd_posture", &mut self.kd_posture)?;
        kv.set("basic.k_energy", &mut self.k_energy)?;
        kv.set("basic.e_target", &mut self.e_target)?;
        kv.set("basic.k_raibert", &mut self.k_raibert)?;
        kv.set("basic.q_s_flight", &mut self.q_s_flight)?;
        kv.set("basic.kp_slide", &mut self.kp_slide)?;
        kv.set("basic.kd_slide", &mut self.kd_slide)?;
        kv.set("basic.kp_swing", &mut self.kp_swing)?;
        kv.set("basic.kd_swing", &mut self.kd_swing)?;
        kv.set("basic.seed_speed", &mut self.seed_speed)?;
        self.validate()
    }

    pub fn write_kv(&self, out: &mut String) {
        kv::write_f64(out, "basic.kp_posture", self.kp_posture);
        kv::write_f64(out, "basic.kd_posture", self.kd_posture);
        kv::write_f64(out, "basic.k_energy", self.k_energy);
        kv::write_f64(out, "basic.e_target", self.e_target);
        kv::write_f64(out, "basic.k_raibert", self.k_raibert);
        kv::write_f64(out, "basic.q_s_flight", self.q_s_flight);
        kv::write_f64(out, "basic.kp_slide", self.kp_slide);
        kv::write_f64(out, "basic.kd_slide", self.kd_slide);
        kv::write_f64(out, "basic.kp_swing", self.kp_swing);
        kv::write_f64(out, "basic.kd_swing", self.kd_swing);
        kv::write_f64(out, "basic.seed_speed", self.seed_speed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Stance,
    Flight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseState {
    pub phase: Phase,
    pub counter: u8,
}

impl Default for PhaseState {
    /// Starts airborne so that the first action is to extend the leg.
    fn default() -> Self {
        Self { phase: Phase::Flight, counter: 0 }
    }
}

pub fn update_phase(state: PhaseState, landing_contact: bool) -> PhaseState {
    let agrees = matches!(
        (state.phase, landing_contact),
        (Phase::Stance, true) | (Phase::Flight, false)
    );
    if agrees {
        return PhaseState { phase: state.phase, counter: 0 };
    }
    let counter = state.counter + 1;
    if counter >= DEBOUNCE_TICKS {
        let phase = match state.phase {
            Phase::Stance => Phase::Flight,
            Phase::Flight => Phase::Stance,
        };
        PhaseState { phase, counter: 0 }
    } else {
        PhaseState { phase: state.phase, counter }
    }
}

/// Body height implied by whichever of the foot or the landing legs reaches
/// lowest, assuming it rests on the floor.
pub fn support_height(r: &Matrix3<f64>, q: &Vector3<f64>, sim: &SimConfig) -> f64 {
    let foot = r * leg_point_in_body(q, &Vector3::zeros(), sim.foot_offset);
    sim.landing_leg_offsets
        .iter()
        .map(|o| -(r * o).z)
        .fold(-foot.z, f64::max)
}

/// Vertical mechanical energy used by the energy-shaping law.
pub fn vertical_energy(p_dot_z: f64, p_z: f64, q_dot_s: f64, sim: &SimConfig) -> f64 {
    let m = sim.total_mass;
    0.5 * m * p_dot_z * p_dot_z + m * sim.gravity * p_z + 0.5 * sim.leg_mass * q_dot_s * q_dot_s
}

/// Gimbal angles that point the leg from the hip toward the world-frame foot
/// offset `(x_f, y_f, -length)`.
pub fn placement_angles(r: &Matrix3<f64>, foot_xy: (f64, f64), length: f64) -> (f64, f64) {
    let up_world = Vector3::new(-foot_xy.0, -foot_xy.1, length).normalize();
    let d = r.transpose() * up_world;
    let q_p = d.x.clamp(-1.0, 1.0).asin();
    let q_r = (-d.y).atan2(d.z);
    (q_r, q_p)
}

pub fn basic_control(
    est: &StateEstimate,
    phase: Phase,
    gains: &BasicGains,
    sim: &SimConfig,
    tau_min: &Vector3<f64>,
    tau_max: &Vector3<f64>,
) -> Vector3<f64> {
    let r = est.orientation.to_rotation_matrix().into_inner();
    let q = est.q;
    let qd = est.q_dot;
    let tau = match phase {
        Phase::Stance => {
            let (roll, pitch) = tilt_angles(&r);
            let w_body = r.transpose() * est.omega;
            let p_z = support_height(&r, &q, sim);
            let e = vertical_energy(est.p_dot.z, p_z, qd.z, sim);
            let v = qd.z.min(-gains.seed_speed);
            Vector3::new(
                gains.kp_posture * roll + gains.kd_posture * w_body.x,
                gains.kp_posture * pitch + gains.kd_posture * w_body.y,
                -gains.k_energy * v * (e - gains.e_target),
            )
        }
        Phase::Flight => {
            let length = sim.foot_offset - q.z;
            let foot = (gains.k_raibert * est.p_dot.x, gains.k_raibert * est.p_dot.y);
            let (q_r_des, q_p_des) = placement_angles(&r, foot, length);
            Vector3::new(
                -gains.kp_swing * (q.x - q_r_des) - gains.kd_swing * qd.x,
                -gains.kp_swing * (q.y - q_p_des) - gains.kd_swing * qd.y,
                -gains.kp_slide * (q.z - gains.q_s_flight) - gains.kd_slide * qd.z,
            )
        }
    };
    Vector3::from_fn(|i, _| {
        let t = if tau[i].is_finite() { tau[i] } else { 0.0 };
        t.clamp(tau_min[i], tau_max[i])
    })
}

/// Stateful wrapper tracking the debounced phase.
#[derive(Debug, Clone)]
pub struct BasicController {
    pub gains: BasicGains,
    pub phase: PhaseState,
}

impl BasicController {
    pub fn new(gains: BasicGains) -> Self {
        Self { gains, phase: PhaseState::default() }
    }

    pub fn reset(&mut self) {
        self.phase = PhaseState::default();
    }

    pub fn control(
        &mut self,
        est: &StateEstimate,
        landing_contact: bool,
        sim: &SimConfig,
        tau_min: &Vector3<f64>,
        tau_max: &Vector3<f64>,
    ) -> Vector3<f64> {
        self.phase = update_phase(self.phase, landing_contact);
        basic_control(est, self.phase.phase, &self.gains, sim, tau_min, tau_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debounce_needs_two_ticks() {
        let s = PhaseState::default();
        let s = update_phase(s, true);
        assert_eq!(s.phase, Phase::Flight);
        let s = update_phase(s, false);
        assert_eq!((s.phase, s.counter), (Phase::Flight, 0));
        let s = update_phase(update_phase(s, true), true);
        assert_eq!(s.phase, Phase::Stance);
        let s = update_phase(update_phase(s, false), false);
        assert_eq!(s.phase, Phase::Flight);
    }

    #[test]
    fn neutral_placement_is_straight_down() {
        let (qr, qp) = placement_angles(&Matrix3::identity(), (0.0, 0.0), 0.5);
        assert_eq!((qr, qp), (0.0, 0.0));
    }
}
