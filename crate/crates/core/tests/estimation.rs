mod common;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use rand::Rng;
use wirehop::dynamics::RobotState;
use wirehop::env::{EnvConfig, Layout};
use wirehop::estimation::ekf::*;
use wirehop::estimation::madgwick::*;
use wirehop::estimation::sensors::*;
use wirehop::harness::{eval_env_config, NoiseMode};

#[test]
fn ekf_tracks_a_noiseless_hop() {
    let recs = common::basic_hop_records(500);
    assert!(recs.iter().map(|r| r.p.z).fold(0.0, f64::max) > 0.6, "trajectory should include a hop");
    let burn_in = 20;
    let mut sq = Vector3::zeros();
    for r in &recs[burn_in..] {
        sq += (r.est_q - r.q).map(|e| e * e);
    }
    let rmse = (sq / (recs.len() - burn_in) as f64).map(f64::sqrt);
    assert!(rmse.x < 0.01 && rmse.y < 0.01, "rotation rmse {rmse:?}");
    assert!(rmse.z < 0.005, "slide rmse {rmse:?}");
}

#[test]
fn length_noise_hits_rates_harder_than_angles() {
    let base = EnvConfig::noiseless(Layout::Ours1);
    let cfg = eval_env_config(&base, Layout::Ours1, NoiseMode::Muscle, 10_000);
    let mut env = wirehop::env::HopperEnv::new(cfg, 0).unwrap();
    env.reset();
    let a = wirehop::env::unscale_action(&Vector3::zeros(), &env.config().tau_min, &env.config().tau_max);
    let (mut q, mut qd): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (vec![Vec::new(); 3], vec![Vec::new(); 3]);
    for _ in 0..10_000 {
        let out = env.step(&a).unwrap();
        for k in 0..3 {
            q[k].push(out.record.est_q[k]);
            qd[k].push(out.record.est_q_dot[k]);
        }
    }
    let vq: f64 = q.iter().map(|c| common::sample_var(c)).sum();
    let vqd: f64 = qd.iter().map(|c| common::sample_var(c)).sum();
    assert!(vqd / vq >= 10.0, "aggregate ratio {}", vqd / vq);
    for k in 0..2 {
        assert!(common::sample_var(&qd[k]) > 10.0 * common::sample_var(&q[k]));
    }
}

/// Textbook Kalman filter on dynamically sized matrices.
struct ReferenceKf {
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl ReferenceKf {
    fn step(&mut self, f: &DMatrix<f64>, q: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>, y: &DVector<f64>) {
        self.x = f * &self.x;
        self.p = f * &self.p * f.transpose() + q;
        let s = h * &self.p * h.transpose() + r;
        let k = &self.p * h.transpose() * s.try_inverse().unwrap();
        self.x = &self.x + &k * (y - h * &self.x);
        self.p = (DMatrix::identity(6, 6) - &k * h) * &self.p;
        self.p = (&self.p + self.p.transpose()) * 0.5;
    }
}

#[test]
fn linear_model_matches_reference_kalman_filter() {
    let geo = common::reference_geometry();
    let model = LinearWireModel { g: geo.muscle_jacobian(&Vector3::new(0.1, -0.2, 0.5)) };
    let mut rng = common::rng(7);
    let dt = 0.01;
    let mut ekf = EkfBelief::at(&Vector3::new(0.05, 0.0, 0.4), &Vector3::zeros());
    let mut reference = ReferenceKf {
        x: DVector::from_column_slice(ekf.x.as_slice()),
        p: DMatrix::from_column_slice(6, 6, ekf.p.as_slice()),
    };
    let dyn_mat = |m: &[f64], r, c| DMatrix::from_column_slice(r, c, m);
    let f = dyn_mat(EkfBelief::transition(dt).as_slice(), 6, 6);
    let qw = dyn_mat(ekf.q_w.as_slice(), 6, 6);
    let rv = dyn_mat(ekf.r_v.as_slice(), 12, 12);
    let h = dyn_mat(model.jacobian(&ekf.x).as_slice(), 12, 6);
    for _ in 0..500 {
        let y = Measurement::from_fn(|_, _| rng.random_range(-0.1..0.1));
        ekf.predict(dt);
        ekf.update(&model, &y);
        reference.step(&f, &qw, &h, &rv, &DVector::from_column_slice(y.as_slice()));
        for i in 0..6 {
            assert!((ekf.x[i] - reference.x[i]).abs() < 1e-10);
            for j in 0..6 {
                assert!((ekf.p[(i, j)] - reference.p[(i, j)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn covariance_stays_healthy_over_long_runs() {
    let geo = common::reference_geometry();
    let mut rng = common::rng(8);
    let mut ekf = EkfBelief::at(&geo.home_pose(), &Vector3::zeros());
    let dt = 0.01;
    for k in 0..100_000 {
        let t = k as f64 * dt;
        let q = Vector3::new(0.3 * t.sin(), 0.2 * (0.7 * t).cos(), 0.5 + 0.1 * (1.3 * t).sin());
        let qd = Vector3::new(0.3 * t.cos(), -0.14 * (0.7 * t).sin(), 0.13 * (1.3 * t).cos());
        let mut y = geo.wire_state(&q, &qd).stacked();
        for (i, v) in y.iter_mut().enumerate() {
            *v += gaussian(&mut rng, if i < 6 { 1e-6 } else { 1e-3 });
        }
        ekf.predict(dt);
        ekf.update(&geo, &y);
        if k % 1000 == 999 {
            assert_eq!(ekf.p, ekf.p.transpose());
            let eig = ekf.p.symmetric_eigenvalues();
            assert!(eig.min() >= 1e-12 && eig.max() <= 1e6, "eigenvalues {eig:?}");
        }
    }
}

#[test]
fn madgwick_converges_to_a_roll_offset() {
    let roll = 30f64.to_radians();
    let accel = UnitQuaternion::from_euler_angles(roll, 0.0, 0.0).inverse() * Vector3::new(0.0, 0.0, 9.81);
    let imu = ImuSample { accel, gyro: Vector3::zeros() };
    let dt = 0.01;
    let mut est = OrientationEstimate::default();
    let horizon = (2.0 / DEFAULT_BETA / dt) as usize;
    for _ in 0..horizon {
        est = madgwick_update(&est, &imu, dt, DEFAULT_BETA);
        assert!((est.q.as_ref().norm() - 1.0).abs() < 1e-9);
    }
    let (r, p, _) = est.q.euler_angles();
    assert!((r - roll).abs() < 1f64.to_radians(), "roll {}", r.to_degrees());
    assert!(p.abs() < 1e-6);
}

#[test]
fn sensors_report_specific_force() {
    let cfg = wirehop::dynamics::SimConfig::default();
    let geo = common::reference_geometry();
    let state = RobotState::standing(&cfg, geo.home_pose());
    let mut rng = common::rng(0);
    let quiet = SensorNoise::default();
    let r = emulate_sensors(&state, &Vector3::zeros(), 9.81, &geo, &quiet, &mut rng);
    assert_eq!(r.imu.accel, Vector3::new(0.0, 0.0, 9.81));
    assert_eq!(r.imu.gyro, Vector3::zeros());
    let r = emulate_sensors(&state, &Vector3::new(0.0, 0.0, -9.81), 9.81, &geo, &quiet, &mut rng);
    assert_eq!(r.imu.accel, Vector3::zeros());
}

#[test]
fn length_noise_has_requested_variance() {
    let cfg = wirehop::dynamics::SimConfig::default();
    let geo = common::reference_geometry();
    let state = RobotState::standing(&cfg, geo.home_pose());
    let truth = geo.wire_lengths(&state.q);
    let noise = SensorNoise { length_var: 0.001, ..SensorNoise::default() };
    let mut rng = common::rng(1);
    let mut dev = Vec::new();
    for _ in 0..10_000 {
        let r = emulate_sensors(&state, &Vector3::zeros(), 9.81, &geo, &noise, &mut rng);
        dev.push(r.wires.l[0] - truth[0]);
        assert_eq!(r.wires.l_dot, geo.wire_state(&state.q, &state.q_dot).l_dot);
    }
    let v = common::sample_var(&dev);
    assert!((v - 0.001).abs() < 1e-4, "variance {v}");
}
