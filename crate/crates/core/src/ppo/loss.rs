//! Clipped-surrogate PPO loss and its exact parameter gradient.

use nalgebra::DMatrix;
use serde::Serialize;

use super::net::{log_prob, ActorCritic, ACTION_DIM, LOG_STD_MAX, LOG_STD_MIN};

#[derive(Debug, Clone)]
pub struct Minibatch {
    /// `obs_dim x B`.
    pub obs: DMatrix<f64>,
    /// `ACTION_DIM x B`, unclamped samples.
    pub actions: DMatrix<f64>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Evaluates the loss; when `grad` is given, its gradient is added to it.
pub fn ppo_loss(net: &ActorCritic, mb: &Minibatch, k: &LossCoefficients, grad: Option<&mut [f64]>) -> LossStats {
    let b = mb.obs.ncols();
    let bf = b as f64;
    let p_cache = net.policy.forward_cached(&net.params, &mb.obs);
    let v_cache = net.value.forward_cached(&net.params, &mb.obs);
    let mean = p_cache.output();
    let values = v_cache.output();
    let log_std = net.log_std();
    let new_lp = log_prob(mean, &log_std, &mb.actions);
    let half_log_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let entropy: f64 = log_std.iter().map(|s| s + half_log_2pi_e).sum();

    let mut stats = LossStats { entropy, ..Default::default() };
    let mut d_logp = vec![0.0; b];
    let mut d_value = DMatrix::zeros(1, b);
    for j in 0..b {
        let log_ratio = new_lp[j] - mb.old_log_prob[j];
        let ratio = log_ratio.exp();
        let a = mb.advantages[j];
        let clipped = ratio.clamp(1.0 - k.clip_eps, 1.0 + k.clip_eps);
        let unclipped_obj = ratio * a;
        let clipped_obj = clipped * a;
        stats.policy_loss -= unclipped_obj.min(clipped_obj) / bf;
        if unclipped_obj <= clipped_obj {
            d_logp[j] = -a * ratio / bf;
        }
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / bf;
        if (ratio - 1.0).abs() > k.clip_eps {
            stats.clip_frac += 1.0 / bf;
        }
        let err = values[(0, j)] - mb.returns[j];
        stats.value_loss += err * err / bf;
        d_value[(0, j)] = k.value_coef * 2.0 * err / bf;
    }
    stats.total = stats.policy_loss + k.value_coef * stats.value_loss - k.entropy_coef * entropy;

    if let Some(grad) = grad {
        let mut d_mean = DMatrix::zeros(ACTION_DIM, b);
        let mut d_log_std = [0.0; ACTION_DIM];
        for j in 0..b {
            for i in 0..ACTION_DIM {
                let var = (2.0 * log_std[i]).exp();
                let diff = mb.actions[(i, j)] - mean[(i, j)];
                d_mean[(i, j)] = d_logp[j] * diff / var;
                d_log_std[i] += d_logp[j] * (diff * diff / var - 1.0);
            }
        }
        net.policy.backward(&net.params, &p_cache, &d_mean, grad);
        let raw = net.raw_log_std();
        for i in 0..ACTION_DIM {
            if raw[i] > LOG_STD_MIN && raw[i] < LOG_STD_MAX {
                grad[net.log_std_offset + i] += d_log_std[i] - k.entropy_coef;
            }
        }
        net.value.backward(&net.params, &v_cache, &d_value, grad);
    }
    stats
}
