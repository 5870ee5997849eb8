//! Collect-then-update training loop over lockstepped environments.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::checkpoint;
use super::gae::{compute_gae, normalize};
use super::loss::{ppo_loss, LossCoefficients, LossStats, Minibatch};
use super::net::{log_prob, ActorCritic, ACTION_DIM};
use super::{curriculum, PpoConfig};
use crate::env::{EnvConfig, HopperEnv, Termination};
use crate::error::{Error, Result};

/// Completed episodes averaged in each metrics row.
pub const EPISODE_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: u64,
    pub env_steps: u64,
    pub mean_reward: f64,
    pub mean_ep_len: f64,
    pub mean_apex: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub c: f64,
}

pub struct TrainOutput {
    pub net: ActorCritic,
    pub metrics: Vec<MetricsRow>,
}

#[derive(Debug, Clone, Copy, Default)]
struct EpisodeStats {
    reward: f64,
    len: u64,
    apex: f64,
}

/// One environment's slice of a rollout.
struct Track {
    obs: Vec<Vec<f64>>,
    actions: Vec<[f64; ACTION_DIM]>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

impl Track {
    fn new(n: usize) -> Self {
        Self {
            obs: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
        }
    }
}

fn obs_matrix(obs: &[Vec<f64>]) -> DMatrix<f64> {
    let dim = obs[0].len();
    DMatrix::from_fn(dim, obs.len(), |i, j| obs[j][i])
}

fn mean_of(items: &VecDeque<EpisodeStats>, f: impl Fn(&EpisodeStats) -> f64) -> f64 {
    if items.is_empty() {
        f64::NAN
    } else {
        items.iter().map(f).sum::<f64>() / items.len() as f64
    }
}

/// Trains from scratch. With `out_dir`, writes `metrics.csv`, periodic
/// `ckpt_<update>.bin` files and `final.bin`.
pub fn train(
    cfg: &PpoConfig,
    env_cfg: &EnvConfig,
    seed: u64,
    out_dir: Option<&Path>,
    mut on_update: impl FnMut(&MetricsRow),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut act_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(master.next_u64());

    let mut envs = Vec::with_capacity(cfg.n_envs);
    for _ in 0..cfg.n_envs {
        envs.push(HopperEnv::new(env_cfg.clone(), master.next_u64())?);
    }
    let mut current: Vec<Vec<f64>> = envs.iter_mut().map(|e| e.reset().values).collect();
    let mut episode = vec![EpisodeStats::default(); cfg.n_envs];
    let mut finished: VecDeque<EpisodeStats> = VecDeque::with_capacity(EPISODE_WINDOW);

    let mut net = ActorCritic::new(env_cfg.layout.obs_dim(), &cfg.hidden, cfg.log_std_init, &mut init_rng);
    let mut adam = Adam::new(net.n_params(), cfg.learning_rate, cfg.adam_eps);
    let coeffs = LossCoefficients { clip_eps: cfg.clip_eps, value_coef: cfg.value_coef, entropy_coef: cfg.entropy_coef };

    let mut metrics_writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(csv::Writer::from_path(dir.join("metrics.csv"))?)
        }
        None => None,
    };

    let mut env_steps = 0u64;
    let mut metrics = Vec::new();
    let n_updates = cfg.n_updates();
    for update in 1..=n_updates {
        let mut tracks: Vec<Track> = (0..cfg.n_envs).map(|_| Track::new(cfg.rollout_steps)).collect();
        let mut c = 0.0;
        for _ in 0..cfg.rollout_steps {
            c = curriculum(env_steps, cfg.total_steps, cfg.curriculum_fraction);
            let obs = obs_matrix(&current);
            let mean = net.policy_mean(&obs);
            let values = net.values(&obs);
            let log_std = net.log_std();
            let actions = DMatrix::from_fn(ACTION_DIM, cfg.n_envs, |i, j| {
                let eps: f64 = StandardNormal.sample(&mut act_rng);
                mean[(i, j)] + log_std[i].exp() * eps
            });
            let lps = log_prob(&mean, &log_std, &actions);
            for (e, env) in envs.iter_mut().enumerate() {
                env.set_curriculum(c);
                let a = Vector3::new(actions[(0, e)], actions[(1, e)], actions[(2, e)]);
                let out = env.step(&a)?;
                let mut reward = out.reward.total;
                let ep = &mut episode[e];
                ep.reward += out.reward.total;
                ep.len += 1;
                ep.apex = ep.apex.max(out.record.p.z);
                if out.termination == Some(Termination::StepLimit) {
                    let v = net.values(&obs_matrix(std::slice::from_ref(&out.obs.values)))[(0, 0)];
                    reward += cfg.gamma * v;
                }
                let tr = &mut tracks[e];
                tr.obs.push(std::mem::take(&mut current[e]));
                tr.actions.push([a.x, a.y, a.z]);
                tr.log_probs.push(lps[e]);
                tr.values.push(values[(0, e)]);
                tr.rewards.push(reward);
                tr.dones.push(out.termination.is_some());
                current[e] = if out.termination.is_some() {
                    if finished.len() == EPISODE_WINDOW {
                        finished.pop_front();
                    }
                    finished.push_back(*ep);
                    *ep = EpisodeStats::default();
                    env.reset().values
                } else {
                    out.obs.values
                };
            }
            env_steps += cfg.n_envs as u64;
        }

        let last_values = net.values(&obs_matrix(&current));
        let n = cfg.n_envs * cfg.rollout_steps;
        let dim = net.input_dim;
        let mut obs_all = DMatrix::zeros(dim, n);
        let mut act_all = DMatrix::zeros(ACTION_DIM, n);
        let mut lp_all = Vec::with_capacity(n);
        let mut adv_all = Vec::with_capacity(n);
        let mut ret_all = Vec::with_capacity(n);
        let mut col = 0;
        for (e, tr) in tracks.iter().enumerate() {
            let (adv, ret) = compute_gae(&tr.rewards, &tr.values, &tr.dones, last_values[(0, e)], cfg.gamma, cfg.gae_lambda);
            for t in 0..tr.obs.len() {
                obs_all.column_mut(col).copy_from_slice(&tr.obs[t]);
                act_all.column_mut(col).copy_from_slice(&tr.actions[t]);
                col += 1;
            }
            lp_all.extend_from_slice(&tr.log_probs);
            adv_all.extend(adv);
            ret_all.extend(ret);
        }

        let mut sums = LossStats::default();
        let mut n_batches = 0.0;
        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            indices.shuffle(&mut shuffle_rng);
            for chunk in indices.chunks(cfg.batch_size) {
                let mut advantages: Vec<f64> = chunk.iter().map(|&i| adv_all[i]).collect();
                normalize(&mut advantages);
                let mb = Minibatch {
                    obs: obs_all.select_columns(chunk),
                    actions: act_all.select_columns(chunk),
                    old_log_prob: chunk.iter().map(|&i| lp_all[i]).collect(),
                    advantages,
                    returns: chunk.iter().map(|&i| ret_all[i]).collect(),
                };
                let mut grad = vec![0.0; net.n_params()];
                let stats = ppo_loss(&net, &mb, &coeffs, Some(&mut grad));
                if !stats.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    let dump = out_dir.map(|d| d.join("nonfinite_batch.json"));
                    if let Some(path) = &dump {
                        dump_batch(path, &mb)?;
                    }
                    return Err(Error::NonFiniteLoss { dump });
                }
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
                adam.step(&mut net.params, &grad);
                sums.policy_loss += stats.policy_loss;
                sums.value_loss += stats.value_loss;
                sums.approx_kl += stats.approx_kl;
                sums.clip_frac += stats.clip_frac;
                n_batches += 1.0;
            }
        }

        let row = MetricsRow {
            update,
            env_steps,
            mean_reward: mean_of(&finished, |e| e.reward),
            mean_ep_len: mean_of(&finished, |e| e.len as f64),
            mean_apex: mean_of(&finished, |e| e.apex),
            policy_loss: sums.policy_loss / n_batches,
            value_loss: sums.value_loss / n_batches,
            kl: sums.approx_kl / n_batches,
            clip_frac: sums.clip_frac / n_batches,
            c,
        };
        on_update(&row);
        if let Some(w) = metrics_writer.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        if let Some(dir) = out_dir {
            if update % cfg.checkpoint_every as u64 == 0 {
                checkpoint::save(&net, &dir.join(format!("ckpt_{update:05}.bin")))?;
            }
        }
        metrics.push(row);
    }
    if let Some(dir) = out_dir {
        checkpoint::save(&net, &dir.join("final.bin"))?;
    }
    Ok(TrainOutput { net, metrics })
}

#[derive(Serialize)]
struct BatchDump<'a> {
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    old_log_prob: &'a [f64],
    advantages: &'a [f64],
    returns: &'a [f64],
}

fn dump_batch(path: &Path, mb: &Minibatch) -> Result<()> {
    let cols = |m: &DMatrix<f64>| m.column_iter().map(|c| c.iter().copied().collect()).collect();
    let dump = BatchDump {
        obs: cols(&mb.obs),
        actions: cols(&mb.actions),
        old_log_prob: &mb.old_log_prob,
        advantages: &mb.advantages,
        returns: &mb.returns,
    };
    std::fs::write(path, serde_json::to_string(&dump)?)?;
    Ok(())
}
