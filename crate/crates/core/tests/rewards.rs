use nalgebra::Vector3;
use proptest::prelude::*;
use wirehop::kinematics::{rot_x, rot_y};
use wirehop::rewards::*;

const TOL: f64 = 1e-12;

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < TOL, "{a} vs {b}");
}

fn cfg() -> RewardConfig {
    RewardConfig::default()
}

#[test]
fn jump_examples() {
    close(reward_jump(&cfg(), 1.2), -1.0);
    close(reward_jump(&cfg(), 0.0), 0.0);
    close(reward_jump(&cfg(), 0.5), 0.25);
    close(reward_jump(&cfg(), 1.1), 1.21);
}

#[test]
fn keep_examples() {
    close(reward_keep(&Vector3::new(3.0, -2.0, 7.0), 4.0, 0.0), 0.0);
    close(reward_keep(&Vector3::new(1.0, 0.0, 5.0), 0.0, 1.0), -1.0);
    close(reward_keep(&Vector3::new(1.0, 1.0, 0.0), 1.0, 0.5), -1.5);
}

#[test]
fn horizon_examples() {
    close(reward_horizon(1.0, 1.0), 0.0);
    let tilted = up_component(&rot_x(std::f64::consts::FRAC_PI_2));
    close(reward_horizon(tilted, 1.0), -1.0);
    let sixty = std::f64::consts::FRAC_PI_3;
    close(reward_horizon(up_component(&rot_x(sixty)), up_component(&rot_y(sixty))), -1.0);
}

#[test]
fn ctrl_examples() {
    close(reward_ctrl(&cfg(), &Vector3::zeros()), 0.0);
    close(reward_ctrl(&cfg(), &Vector3::new(1.0, 1.0, 1.0)), -18.09);
    close(reward_ctrl(&cfg(), &Vector3::new(0.0, 0.0, 1.0)), -0.09);
}

#[test]
fn contact_examples() {
    close(reward_contact(&cfg(), 0.2, 0.1), 0.0);
    close(reward_contact(&cfg(), -0.01, 0.05), -0.6);
    close(reward_contact(&cfg(), 0.0, 0.0), 0.0);
    close(reward_contact(&cfg(), 0.1, -1e-9), -0.3);
}

#[test]
fn range_examples() {
    close(reward_range(&cfg(), &Vector3::new(0.0, 0.0, 0.5)), 0.0);
    close(reward_range(&cfg(), &Vector3::new(0.5, 0.0, 0.5)), -0.1);
    close(reward_range(&cfg(), &Vector3::new(0.0, 0.0, 0.85)), -50.0 * (0.776f64 - 0.85).powi(2));
    close(reward_range(&cfg(), &Vector3::new(0.0, -0.6, 0.2)), -10.0 * 0.04 - 50.0 * 0.0025);
}

fn resting(p_z: f64) -> RewardInputs {
    RewardInputs {
        p_z,
        p_dot: Vector3::zeros(),
        omega_z: 0.0,
        body_up: 1.0,
        leg_up: 1.0,
        action: Vector3::zeros(),
        leg_tip_z: 0.0,
        landing_z: 0.0,
        q: Vector3::new(0.0, 0.0, 0.5),
        c: 0.0,
    }
}

#[test]
fn total_examples() {
    let zero = RewardBreakdown::from_terms(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    close(zero.total, 0.1);
    close(zero.survival, SURVIVAL_REWARD);
    close(reward_total(&cfg(), &resting(0.9)).total, 0.91);
}

proptest! {
    #[test]
    fn breakdown_sum_is_bit_exact(
        p_z in -0.5..2.0f64, vx in -5.0..5.0f64, vy in -5.0..5.0f64, wz in -10.0..10.0f64,
        bu in -1.0..1.0f64, lu in -1.0..1.0f64,
        a0 in -1.0..1.0f64, a1 in -1.0..1.0f64, a2 in -1.0..1.0f64,
        tip in -0.1..0.3f64, land in -0.1..0.3f64,
        q0 in -1.0..1.0f64, q1 in -1.0..1.0f64, q2 in 0.0..1.0f64, c in 0.0..1.0f64,
    ) {
        let inputs = RewardInputs {
            p_z, p_dot: Vector3::new(vx, vy, 0.0), omega_z: wz, body_up: bu, leg_up: lu,
            action: Vector3::new(a0, a1, a2), leg_tip_z: tip, landing_z: land,
            q: Vector3::new(q0, q1, q2), c,
        };
        let b = reward_total(&cfg(), &inputs);
        let sum = b.r_jump + b.r_keep + b.r_horizon + b.r_ctrl + b.r_contact + b.r_range + b.survival;
        prop_assert_eq!(b.total.to_bits(), sum.to_bits());
        prop_assert!(b.r_jump <= 1.21 && b.r_jump >= -1.0);
        prop_assert!(b.r_keep <= 0.0 && b.r_range <= 0.0);
        prop_assert!((-4.0..=0.0).contains(&b.r_horizon));
        prop_assert!((-18.09 - 1e-12..=0.0).contains(&b.r_ctrl));
    }
}
