mod common;

use nalgebra::Vector3;
use rand::Rng;
use wirehop::tension::{distribute_tensions, DEFAULT_MIN_TENSION};
use wirehop::wire::{Vector6, WireGeometry, N_WIRES};

/// Independent length oracle: rotate the anchor by hand with explicit trig.
fn oracle_length(geo: &WireGeometry, i: usize, q: &Vector3<f64>) -> f64 {
    let a = geo.leg_anchors[i];
    let (x, y, z) = (a.x, a.y, a.z + q.z - geo.foot_offset);
    let (sp, cp) = q.y.sin_cos();
    let (x1, y1, z1) = (cp * x + sp * z, y, -sp * x + cp * z);
    let (sr, cr) = q.x.sin_cos();
    let p = Vector3::new(x1, cr * y1 - sr * z1, sr * y1 + cr * z1);
    (p - geo.body_anchors[i]).norm()
}

#[test]
fn lengths_match_independent_oracle() {
    let geo = common::reference_geometry();
    let mut rng = common::rng(1);
    for _ in 0..200 {
        let q = common::sample_box(&mut rng, common::Q_MIN, common::Q_MAX);
        let l = geo.wire_lengths(&q);
        for i in 0..N_WIRES {
            assert!((l[i] - oracle_length(&geo, i, &q)).abs() < 1e-14);
            assert!(l[i] > 0.0);
        }
    }
    let home = geo.home_pose();
    let l = geo.wire_lengths(&home);
    for i in 0..N_WIRES {
        assert!((l[i] - oracle_length(&geo, i, &home)).abs() < 1e-14);
    }
}

#[test]
fn roll_mirror_permutes_lengths() {
    let geo = common::reference_geometry();
    for q_s in [0.2, 0.5, 0.8] {
        let a = geo.wire_lengths(&Vector3::new(0.2, 0.0, q_s));
        let b = geo.wire_lengths(&Vector3::new(-0.2, 0.0, q_s));
        for i in 0..N_WIRES {
            assert!((a[i] - b[(N_WIRES - i) % N_WIRES]).abs() < 1e-14);
        }
    }
}

#[test]
fn extension_wires_lengthen_with_slide() {
    let geo = common::reference_geometry();
    let mut prev: Option<f64> = None;
    for k in 0..=100 {
        let q_s = 0.1 + (0.926 - 0.1) * k as f64 / 100.0;
        let l = geo.wire_lengths(&Vector3::new(0.1, -0.1, q_s));
        let total: f64 = (0..N_WIRES).step_by(2).map(|i| l[i]).sum();
        if let Some(p) = prev {
            assert!(total > p);
        }
        prev = Some(total);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let geo = common::reference_geometry();
    let mut rng = common::rng(2);
    let h = 1e-6;
    for _ in 0..1000 {
        let q = common::sample_box(&mut rng, common::Q_MIN, common::Q_MAX);
        let g = geo.muscle_jacobian(&q);
        for k in 0..3 {
            let mut dq = Vector3::zeros();
            dq[k] = h;
            let fd = (geo.wire_lengths(&(q + dq)) - geo.wire_lengths(&(q - dq))) / (2.0 * h);
            assert!((fd - g.column(k)).amax() < 1e-6);
        }
    }
}

#[test]
fn full_rank_and_null_torque_feasible_on_grid() {
    let geo = common::reference_geometry();
    let n = 10;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let t = |m: usize, a: usize| common::Q_MIN[a] + (common::Q_MAX[a] - common::Q_MIN[a]) * m as f64 / (n - 1) as f64;
                let q = Vector3::new(t(i, 0), t(j, 1), t(k, 2));
                let g = geo.muscle_jacobian(&q);
                let sv = g.svd(false, false).singular_values;
                assert!(sv.min() > 1e-3 * sv.max(), "ill conditioned at {q:?}");
                let sol = distribute_tensions(&geo, &q, &Vector3::zeros(), DEFAULT_MIN_TENSION).unwrap();
                assert!(!sol.degraded);
                assert!(sol.residual_torque.amax() < 1e-9);
            }
        }
    }
}

#[test]
fn torque_map_is_linear() {
    let geo = common::reference_geometry();
    let mut rng = common::rng(4);
    for _ in 0..100 {
        let q = common::sample_box(&mut rng, common::Q_MIN, common::Q_MAX);
        let f = Vector6::from_fn(|_, _| rng.random_range(0.0..200.0));
        let t1 = geo.torque_from_tensions(&q, &f);
        let t2 = geo.torque_from_tensions(&q, &(f * 2.0));
        assert!((t2 - t1 * 2.0).amax() < 1e-12);
        assert_eq!(geo.torque_from_tensions(&q, &Vector6::zeros()), Vector3::zeros());
    }
}

#[test]
fn wire_rates_match_differenced_lengths_along_a_path() {
    let geo = common::reference_geometry();
    let path = |t: f64| Vector3::new(0.5 * (2.0 * t).sin(), 0.4 * (3.0 * t).cos(), 0.5 + 0.3 * t.sin());
    let dt = 1e-5;
    for k in 0..50 {
        let t = k as f64 * 0.1;
        let q = path(t);
        let q_dot = (path(t + dt) - path(t - dt)) / (2.0 * dt);
        let rate = geo.wire_state(&q, &q_dot).l_dot;
        let fd = (geo.wire_lengths(&path(t + dt)) - geo.wire_lengths(&path(t - dt))) / (2.0 * dt);
        assert!((rate - fd).amax() < 1e-6);
    }
}
