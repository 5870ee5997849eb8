//! Per-tick reward terms.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{self, KvMap};

pub const SURVIVAL_REWARD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub jump_cap_height: f64,
    pub w_a: Vector3<f64>,
    pub contact_penalty: f64,
    pub sink_gain: f64,
    pub q_min: Vector3<f64>,
    pub q_max: Vector3<f64>,
    pub q_thre: Vector3<f64>,
    pub range_weights: Vector3<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            jump_cap_height: 1.1,
            w_a: Vector3::new(3.0, 3.0, 0.3),
            contact_penalty: 0.3,
            sink_gain: 3000.0,
            q_min: Vector3::new(-0.8, -0.8, 0.1),
            q_max: Vector3::new(0.8, 0.8, 0.926),
            q_thre: Vector3::new(0.4, 0.4, 0.15),
            range_weights: Vector3::new(10.0, 10.0, 50.0),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.q_min[i] + self.q_thre[i] < self.q_max[i] - self.q_thre[i]) {
                return Err(Error::Config(format!("reward band on axis {i} is empty")));
            }
        }
        Ok(())
    }

    pub fn in_range(&self, q: &Vector3<f64>) -> bool {
        (0..3).all(|i| q[i] >= self.q_min[i] && q[i] <= self.q_max[i])
    }

    pub fn read_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.set("reward.jump_cap_height", &mut self.jump_cap_height)?;
        kv.set_vec3("reward.w_a", &mut self.w_a)?;
        kv.set("reward.contact_penalty", &mut self.contact_penalty)?;
        kv.set("reward.sink_gain", &mut self.sink_gain)?;
        kv.set_vec3("reward.q_min", &mut self.q_min)?;
        kv.set_vec3("reward.q_max", &mut self.q_max)?;
        kv.set_vec3("reward.q_thre", &mut self.q_thre)?;
        kv.set_vec3("reward.range_weights", &mut self.range_weights)?;
        self.validate()
    }

    pub fn write_kv(&self, out: &mut String) {
        kv::write_f64(out, "reward.jump_cap_height", self.jump_cap_height);
        kv::write_vec3(out, "reward.w_a", &self.w_a);
        kv::write_f64(out, "reward.contact_penalty", self.contact_penalty);
        kv::write_f64(out, "reward.sink_gain", self.sink_gain);
        kv::write_vec3(out, "reward.q_min", &self.q_min);
        kv::write_vec3(out, "reward.q_max", &self.q_max);
        kv::write_vec3(out, "reward.q_thre", &self.q_thre);
        kv::write_vec3(out, "reward.range_weights", &self.range_weights);
    }
}

/// Everything the reward depends on, as logged in trajectory dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub p_z: f64,
    pub p_dot: Vector3<f64>,
    pub omega_z: f64,
    /// `(R e_z) . e_z` for the body and the leg.
    pub body_up: f64,
    pub leg_up: f64,
    pub action: Vector3<f64>,
    pub leg_tip_z: f64,
    pub landing_z: f64,
    pub q: Vector3<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_jump: f64,
    pub r_keep: f64,
    pub r_horizon: f64,
    pub r_ctrl: f64,
    pub r_contact: f64,
    pub r_range: f64,
    pub survival: f64,
    pub total: f64,
}

pub fn up_component(r: &Matrix3<f64>) -> f64 {
    r[(2, 2)]
}

pub fn reward_jump(cfg: &RewardConfig, p_z: f64) -> f64 {
    if p_z > cfg.jump_cap_height {
        -1.0
    } else {
        p_z * p_z
    }
}

pub fn reward_keep(p_dot: &Vector3<f64>, omega_z: f64, c: f64) -> f64 {
    -c * (p_dot.x * p_dot.x + p_dot.y * p_dot.y + omega_z * omega_z)
}

pub fn reward_horizon(body_up: f64, leg_up: f64) -> f64 {
    -(1.0 - body_up) - (1.0 - leg_up)
}

pub fn reward_ctrl(cfg: &RewardConfig, a: &Vector3<f64>) -> f64 {
    -cfg.w_a.component_mul(a).norm_squared()
}

pub fn reward_contact(cfg: &RewardConfig, leg_tip_z: f64, landing_z: f64) -> f64 {
    let leg = if leg_tip_z < 0.0 {
        -cfg.contact_penalty - cfg.sink_gain * leg_tip_z * leg_tip_z
    } else {
        0.0
    };
    let land = if landing_z < 0.0 { -cfg.contact_penalty } else { 0.0 };
    leg + land
}

pub fn reward_range(cfg: &RewardConfig, q: &Vector3<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..3 {
        let lo = cfg.q_min[i] + cfg.q_thre[i];
        let hi = cfg.q_max[i] - cfg.q_thre[i];
        let axis = if q[i] < lo {
            -(lo - q[i]).powi(2)
        } else if q[i] > hi {
            -(hi - q[i]).powi(2)
        } else {
            0.0
        };
        total += cfg.range_weights[i] * axis;
    }
    total
}

impl RewardBreakdown {
    /// Sums the stored terms in a fixed order.
    pub fn from_terms(r_jump: f64, r_keep: f64, r_horizon: f64, r_ctrl: f64, r_contact: f64, r_range: f64) -> Self {
        let survival = SURVIVAL_REWARD;
        let total = r_jump + r_keep + r_horizon + r_ctrl + r_contact + r_range + survival;
        Self { r_jump, r_keep, r_horizon, r_ctrl, r_contact, r_range, survival, total }
    }
}

pub fn reward_total(cfg: &RewardConfig, inputs: &RewardInputs) -> RewardBreakdown {
    RewardBreakdown::from_terms(
        reward_jump(cfg, inputs.p_z),
        reward_keep(&inputs.p_dot, inputs.omega_z, inputs.c),
        reward_horizon(inputs.body_up, inputs.leg_up),
        reward_ctrl(cfg, &inputs.action),
        reward_contact(cfg, inputs.leg_tip_z, inputs.landing_z),
        reward_range(cfg, &inputs.q),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_cap_is_strict() {
        let cfg = RewardConfig::default();
        assert_eq!(reward_jump(&cfg, 1.1), 1.1 * 1.1);
        assert_eq!(reward_jump(&cfg, 1.1000001), -1.0);
    }

    #[test]
    fn default_band_is_nonempty() {
        RewardConfig::default().validate().unwrap();
        let mut bad = RewardConfig::default();
        bad.q_thre.z = 0.5;
        assert!(bad.validate().is_err());
    }
}
