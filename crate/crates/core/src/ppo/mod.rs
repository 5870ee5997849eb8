//! Proximal policy optimization with a diagonal-Gaussian MLP policy.

pub mod adam;
pub mod checkpoint;
pub mod gae;
pub mod loss;
pub mod net;
pub mod train;

use crate::error::{Error, Result};
use crate::kv::{self, KvMap};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub total_steps: u64,
    pub n_envs: usize,
    pub rollout_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    pub log_std_init: f64,
    pub hidden: Vec<usize>,
    /// Fraction of `total_steps` over which the curriculum ramps from 0 to 1.
    pub curriculum_fraction: f64,
    /// Write a checkpoint every this many updates (the final one is always written).
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_steps: 10_000_000,
            n_envs: 6,
            rollout_steps: 2048,
            batch_size: 1024,
            epochs: 10,
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            log_std_init: 0.0,
            hidden: net::HIDDEN.to_vec(),
            curriculum_fraction: 0.5,
            checkpoint_every: 10,
        }
    }
}

impl PpoConfig {
    pub fn steps_per_update(&self) -> u64 {
        (self.n_envs * self.rollout_steps) as u64
    }

    pub fn n_updates(&self) -> u64 {
        self.total_steps.div_ceil(self.steps_per_update())
    }

    pub fn validate(&self) -> Result<()> {
        let per_update = self.n_envs * self.rollout_steps;
        if self.n_envs == 0 || self.rollout_steps == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("ppo sizes must be positive".into()));
        }
        if !per_update.is_multiple_of(self.batch_size) {
            return Err(Error::Config(format!(
                "batch_size {} does not divide n_envs * rollout_steps = {per_update}",
                self.batch_size
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.curriculum_fraction > 0.0) || self.checkpoint_every == 0 {
            return Err(Error::Config("curriculum_fraction and checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.set("ppo.total_steps", &mut self.total_steps)?;
        kv.set("ppo.n_envs", &mut self.n_envs)?;
        kv.set("ppo.rollout_steps", &mut self.rollout_steps)?;
        kv.set("ppo.batch_size", &mut self.batch_size)?;
        kv.set("ppo.epochs", &mut self.epochs)?;
        kv.set("ppo.clip_eps", &mut self.clip_eps)?;
        kv.set("ppo.gamma", &mut self.gamma)?;
        kv.set("ppo.gae_lambda", &mut self.gae_lambda)?;
        kv.set("ppo.learning_rate", &mut self.learning_rate)?;
        kv.set("ppo.value_coef", &mut self.value_coef)?;
        kv.set("ppo.entropy_coef", &mut self.entropy_coef)?;
        kv.set("ppo.max_grad_norm", &mut self.max_grad_norm)?;
        kv.set("ppo.adam_eps", &mut self.adam_eps)?;
        kv.set("ppo.log_std_init", &mut self.log_std_init)?;
        if let Some(h) = kv.take_list("ppo.hidden")? {
            self.hidden = h.iter().map(|&w| w as usize).collect();
        }
        kv.set("ppo.curriculum_fraction", &mut self.curriculum_fraction)?;
        kv.set("ppo.checkpoint_every", &mut self.checkpoint_every)?;
        self.validate()
    }

    pub fn write_kv(&self, out: &mut String) {
        kv::write_display(out, "ppo.total_steps", self.total_steps);
        kv::write_display(out, "ppo.n_envs", self.n_envs);
        kv::write_display(out, "ppo.rollout_steps", self.rollout_steps);
        kv::write_display(out, "ppo.batch_size", self.batch_size);
        kv::write_display(out, "ppo.epochs", self.epochs);
        kv::write_f64(out, "ppo.clip_eps", self.clip_eps);
        kv::write_f64(out, "ppo.gamma", self.gamma);
        kv::write_f64(out, "ppo.gae_lambda", self.gae_lambda);
        kv::write_f64(out, "ppo.learning_rate", self.learning_rate);
        kv::write_f64(out, "ppo.value_coef", self.value_coef);
        kv::write_f64(out, "ppo.entropy_coef", self.entropy_coef);
        kv::write_f64(out, "ppo.max_grad_norm", self.max_grad_norm);
        kv::write_f64(out, "ppo.adam_eps", self.adam_eps);
        kv::write_f64(out, "ppo.log_std_init", self.log_std_init);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        kv::write_display(out, "ppo.hidden", hidden.join(", "));
        kv::write_f64(out, "ppo.curriculum_fraction", self.curriculum_fraction);
        kv::write_display(out, "ppo.checkpoint_every", self.checkpoint_every);
    }
}

/// Linear ramp from 0 to 1 over `fraction * total` environment steps.
pub fn curriculum(env_steps: u64, total_steps: u64, fraction: f64) -> f64 {
    (env_steps as f64 / (fraction * total_steps as f64)).min(1.0)
}
