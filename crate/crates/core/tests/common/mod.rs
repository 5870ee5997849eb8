#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Vector3};
use wirehop::ppo::loss::Minibatch;
use wirehop::ppo::net::{log_prob, ActorCritic, ACTION_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wirehop::wire::{MuscleJacobian, Vector6, WireGeometry, N_WIRES};

pub const Q_MIN: [f64; 3] = [-0.8, -0.8, 0.1];
pub const Q_MAX: [f64; 3] = [0.8, 0.8, 0.926];
pub const TAU_MIN: [f64; 3] = [-50.0, -50.0, -320.0];
pub const TAU_MAX: [f64; 3] = [50.0, 50.0, 90.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sample_box(rng: &mut impl Rng, lo: [f64; 3], hi: [f64; 3]) -> Vector3<f64> {
    Vector3::from_fn(|i, _| rng.random_range(lo[i]..=hi[i]))
}

/// Brute force over every clamp pattern: for each subset of wires pinned at
/// the floor, solve the remaining equality-constrained least-norm problem and
/// keep the cheapest primal-feasible candidate.
pub fn enumerate_qp(g: &MuscleJacobian, tau: &Vector3<f64>, f_min: f64) -> Option<(Vector6, f64)> {
    let mut best: Option<(Vector6, f64)> = None;
    for mask in 0u32..(1 << N_WIRES) {
        let clamped: Vec<usize> = (0..N_WIRES).filter(|i| mask & (1 << i) != 0).collect();
        let free: Vec<usize> = (0..N_WIRES).filter(|i| mask & (1 << i) == 0).collect();
        if free.len() < 3 {
            continue;
        }
        let mut rhs = -tau;
        for &i in &clamped {
            rhs -= g.row(i).transpose() * f_min;
        }
        let mut gram = Matrix3::zeros();
        for &i in &free {
            gram += g.row(i).transpose() * g.row(i);
        }
        let Some(inv) = gram.try_inverse() else { continue };
        let lambda = inv * rhs;
        let mut f = Vector6::from_element(f_min);
        for &i in &free {
            f[i] = g.row(i).dot(&lambda.transpose());
        }
        if free.iter().any(|&i| f[i] < f_min - 1e-12) {
            continue;
        }
        if (g.transpose() * f + tau).amax() > 1e-8 {
            continue;
        }
        let obj = f.norm_squared();
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((f, obj));
        }
    }
    best
}

pub fn reference_geometry() -> WireGeometry {
    WireGeometry::default()
}

/// Noiseless Basic-controller hop, one record per control tick.
pub fn basic_hop_records(ticks: u64) -> Vec<wirehop::env::TickRecord> {
    use wirehop::baseline::{BasicController, BasicGains};
    use wirehop::env::{EnvConfig, HopperEnv, Layout};
    use wirehop::harness::{BasicAgent, Controller};
    let cfg = EnvConfig { max_steps: ticks, ..EnvConfig::noiseless(Layout::Ours1) };
    let mut env = HopperEnv::new(cfg, 0).unwrap();
    let mut agent = BasicAgent(BasicController::new(BasicGains::default()));
    let mut obs = env.reset();
    let mut out = Vec::new();
    for _ in 0..ticks {
        let a = agent.action(&env, &obs);
        let step = env.step(&a).unwrap();
        assert!(step.termination.is_none(), "hop ended early at tick {}", step.record.tick);
        out.push(step.record);
        obs = step.obs;
    }
    out
}

pub fn sample_var(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub const REL_TOL: f64 = 1e-4;

pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= REL_TOL * scale.max(1e-6)
}

pub fn small_net(rng: &mut impl Rng) -> ActorCritic {
    let mut net = ActorCritic::new(5, &[6, 4], -0.3, rng);
    // Non-trivial output layers so every parameter carries gradient.
    for p in net.params.iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

pub fn random_batch(net: &ActorCritic, rng: &mut impl Rng, b: usize) -> Minibatch {
    let obs = DMatrix::from_fn(net.input_dim, b, |_, _| rng.random_range(-1.0..1.0));
    let mean = net.policy_mean(&obs);
    let actions = DMatrix::from_fn(ACTION_DIM, b, |i, j| mean[(i, j)] + rng.random_range(-0.8..0.8));
    let lp = log_prob(&mean, &net.log_std(), &actions);
    Minibatch {
        old_log_prob: lp.iter().map(|l| l + rng.random_range(-0.4..0.4)).collect(),
        advantages: (0..b).map(|_| rng.random_range(-2.0..2.0)).collect(),
        returns: (0..b).map(|_| rng.random_range(-3.0..3.0)).collect(),
        obs,
        actions,
    }
}
