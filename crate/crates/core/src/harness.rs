//! Episode runner, controller comparison and Basic-gain tuning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::baseline::{BasicController, BasicGains};
use crate::env::{
    survival_steps, unscale_action, EnvConfig, HopperEnv, Layout, NoiseConfig, Observation, TickRecord,
    EVAL_LENGTH_NOISE_VAR,
};
use crate::error::{Error, Result};
use crate::estimation::sensors::SensorNoise;
use crate::kv::KvMap;
use crate::ppo::checkpoint;
use crate::ppo::net::ActorCritic;

pub const CSV_SCHEMA_VERSION: u32 = 1;
/// Rise above standing height that arms a jump.
pub const JUMP_RISE: f64 = 0.05;
/// Height above standing at which the detector re-arms.
pub const JUMP_REARM: f64 = 0.025;

pub trait Controller {
    fn reset(&mut self);
    /// Normalized action in `[-1, 1]`.
    fn action(&mut self, env: &HopperEnv, obs: &Observation) -> Vector3<f64>;
}

pub struct BasicAgent(pub BasicController);

impl Controller for BasicAgent {
    fn reset(&mut self) {
        self.0.reset();
    }

    fn action(&mut self, env: &HopperEnv, _obs: &Observation) -> Vector3<f64> {
        let cfg = env.config();
        let landing = env.contact_report().landing_in_contact;
        let tau = self.0.control(env.estimate(), landing, &cfg.sim, &cfg.tau_min, &cfg.tau_max);
        unscale_action(&tau, &cfg.tau_min, &cfg.tau_max)
    }
}

/// Deterministic policy: the Gaussian mean.
pub struct PolicyAgent(pub ActorCritic);

impl Controller for PolicyAgent {
    fn reset(&mut self) {}

    fn action(&mut self, _env: &HopperEnv, obs: &Observation) -> Vector3<f64> {
        let x = DMatrix::from_column_slice(obs.values.len(), 1, &obs.values);
        let m = self.0.policy_mean(&x);
        Vector3::new(m[(0, 0)], m[(1, 0)], m[(2, 0)])
    }
}

/// Commands zero joint torque.
pub struct ZeroTorque;

impl Controller for ZeroTorque {
    fn reset(&mut self) {}

    fn action(&mut self, env: &HopperEnv, _obs: &Observation) -> Vector3<f64> {
        let cfg = env.config();
        unscale_action(&Vector3::zeros(), &cfg.tau_min, &cfg.tau_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Clean,
    Muscle,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Clean => "clean",
            NoiseMode::Muscle => "muscle",
        }
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(NoiseMode::Clean),
            "muscle" => Ok(NoiseMode::Muscle),
            other => Err(Error::Config(format!("unknown noise mode `{other}`"))),
        }
    }
}

/// Evaluation environment: plant and geometry from `base`, no training
/// randomization, and muscle-length noise only in [`NoiseMode::Muscle`].
pub fn eval_env_config(base: &EnvConfig, layout: Layout, noise: NoiseMode, max_steps: u64) -> EnvConfig {
    let mut cfg = base.clone();
    cfg.layout = layout;
    cfg.noise = NoiseConfig::noiseless();
    cfg.sensors = SensorNoise {
        length_var: match noise {
            NoiseMode::Clean => 0.0,
            NoiseMode::Muscle => EVAL_LENGTH_NOISE_VAR,
        },
        ..SensorNoise::default()
    };
    cfg.max_steps = max_steps;
    cfg
}

/// Counts apexes: a jump registers when the body rises `JUMP_RISE` above
/// standing height and re-arms once it is back below `JUMP_REARM`.
#[derive(Debug, Clone)]
pub struct JumpCounter {
    standing: f64,
    armed: bool,
    pub count: u32,
}

impl JumpCounter {
    pub fn new(standing_height: f64) -> Self {
        Self { standing: standing_height, armed: true, count: 0 }
    }

    pub fn observe(&mut self, p_z: f64) {
        if self.armed && p_z >= self.standing + JUMP_RISE {
            self.count += 1;
            self.armed = false;
        } else if !self.armed && p_z < self.standing + JUMP_REARM {
            self.armed = true;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub survival_steps: u64,
    pub n_jumps: u32,
    pub termination: String,
    pub mean_reward: f64,
}

pub fn run_episode(
    controller: &mut dyn Controller,
    env_cfg: &EnvConfig,
    seed: u64,
    dump: Option<&Path>,
) -> Result<TrialResult> {
    let mut env = HopperEnv::new(env_cfg.clone(), seed)?;
    env.set_curriculum(1.0);
    let mut obs = env.reset_with_seed(seed);
    controller.reset();
    let mut writer = match dump {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut jumps = JumpCounter::new(env_cfg.sim.landing_depth());
    let mut reward_sum = 0.0;
    loop {
        let a = controller.action(&env, &obs);
        let out = env.step(&a)?;
        if let Some(w) = writer.as_mut() {
            serde_json::to_writer(&mut *w, &out.record)?;
            w.write_all(b"\n")?;
        }
        jumps.observe(out.record.p.z);
        reward_sum += out.reward.total;
        if let Some(t) = out.termination {
            if let Some(w) = writer.as_mut() {
                w.flush()?;
            }
            let ticks = out.record.tick;
            return Ok(TrialResult {
                seed,
                survival_steps: survival_steps(ticks),
                n_jumps: jumps.count,
                termination: t.as_str().to_string(),
                mean_reward: reward_sum / ticks as f64,
            });
        }
        obs = out.obs;
    }
}

pub fn read_dump(path: &Path) -> Result<Vec<TickRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Basic,
    Ours1,
    Ours2,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Basic => "basic",
            ControllerKind::Ours1 => "ours1",
            ControllerKind::Ours2 => "ours2",
        }
    }
}

/// The comparison protocol: every controller under both noise modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub ours1_checkpoint: PathBuf,
    pub ours2_checkpoint: PathBuf,
    pub seeds: Vec<u64>,
    pub max_steps: u64,
    pub config: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Reads `ours1_checkpoint`, `ours2_checkpoint`, `seeds`, `trials`,
    /// `max_steps` and optional `config`. Relative paths resolve against the
    /// spec file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut kv = KvMap::from_file(path)?;
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let need = |kv: &mut KvMap, key: &str| kv.take_str(key).ok_or_else(|| Error::Config(format!("missing `{key}`")));
        let ours1_checkpoint = resolve(need(&mut kv, "ours1_checkpoint")?);
        let ours2_checkpoint = resolve(need(&mut kv, "ours2_checkpoint")?);
        let seeds: Vec<u64> = need(&mut kv, "seeds")?
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| Error::Config(format!("bad seed `{s}`"))))
            .collect::<Result<_>>()?;
        let trials = kv.take::<usize>("trials")?.unwrap_or(seeds.len());
        if trials != seeds.len() {
            return Err(Error::Config(format!("trials = {trials} but {} seeds given", seeds.len())));
        }
        let max_steps = kv.take::<u64>("max_steps")?.unwrap_or(10_000);
        let config = kv.take_str("config").map(resolve);
        kv.finish()?;
        Ok(Self { ours1_checkpoint, ours2_checkpoint, seeds, max_steps, config })
    }
}

/// One line of the comparison CSV. Trial rows leave the summary columns
/// empty and summary rows leave the per-trial columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub schema_version: u32,
    pub row_type: String,
    pub controller: String,
    pub noise: String,
    pub seed: Option<u64>,
    pub survival_steps: Option<u64>,
    pub n_jumps: Option<u32>,
    pub termination: Option<String>,
    pub mean_reward: Option<f64>,
    pub survival_mean: Option<f64>,
    /// Sample variance (n - 1 denominator).
    pub survival_var: Option<f64>,
}

pub fn summarize(controller: ControllerKind, noise: NoiseMode, trials: &[TrialResult]) -> CsvRow {
    let n = trials.len() as f64;
    let mean = trials.iter().map(|t| t.survival_steps as f64).sum::<f64>() / n;
    let var = if trials.len() > 1 {
        trials.iter().map(|t| (t.survival_steps as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    CsvRow {
        schema_version: CSV_SCHEMA_VERSION,
        row_type: "summary".into(),
        controller: controller.as_str().into(),
        noise: noise.as_str().into(),
        seed: None,
        survival_steps: None,
        n_jumps: None,
        termination: None,
        mean_reward: None,
        survival_mean: Some(mean),
        survival_var: Some(var),
    }
}

pub fn trial_row(controller: ControllerKind, noise: NoiseMode, t: &TrialResult) -> CsvRow {
    CsvRow {
        schema_version: CSV_SCHEMA_VERSION,
        row_type: "trial".into(),
        controller: controller.as_str().into(),
        noise: noise.as_str().into(),
        seed: Some(t.seed),
        survival_steps: Some(t.survival_steps),
        n_jumps: Some(t.n_jumps),
        termination: Some(t.termination.clone()),
        mean_reward: Some(t.mean_reward),
        survival_mean: None,
        survival_var: None,
    }
}

/// Runs one (controller, noise) cell over `seeds`, sorted by seed.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    kind: ControllerKind,
    noise: NoiseMode,
    base: &EnvConfig,
    basic: &BasicGains,
    net: Option<&ActorCritic>,
    seeds: &[u64],
    max_steps: u64,
    dump_dir: Option<&Path>,
) -> Result<Vec<TrialResult>> {
    let layout = match kind {
        ControllerKind::Ours2 => Layout::Ours2,
        _ => Layout::Ours1,
    };
    let cfg = eval_env_config(base, layout, noise, max_steps);
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let mut results = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut agent: Box<dyn Controller> = match (kind, net) {
            (ControllerKind::Basic, _) => Box::new(BasicAgent(BasicController::new(*basic))),
            (_, Some(n)) => {
                if n.input_dim != layout.obs_dim() {
                    return Err(Error::Checkpoint(format!(
                        "{} checkpoint has input width {} (expected {})",
                        kind.as_str(),
                        n.input_dim,
                        layout.obs_dim()
                    )));
                }
                Box::new(PolicyAgent(n.clone()))
            }
            (_, None) => return Err(Error::Config(format!("{} needs a checkpoint", kind.as_str()))),
        };
        let dump = dump_dir.map(|d| d.join(format!("{}_{}_{seed}.jsonl", kind.as_str(), noise.as_str())));
        results.push(run_episode(agent.as_mut(), &cfg, seed, dump.as_deref())?);
    }
    Ok(results)
}

/// Runs the full grid and returns trial and summary rows in a fixed order.
pub fn run_comparison(spec: &ExperimentSpec, base: &EnvConfig, basic: &BasicGains) -> Result<Vec<CsvRow>> {
    let ours1 = checkpoint::load(&spec.ours1_checkpoint)?;
    let ours2 = checkpoint::load(&spec.ours2_checkpoint)?;
    let mut rows = Vec::new();
    for (kind, net) in [
        (ControllerKind::Basic, None),
        (ControllerKind::Ours1, Some(&ours1)),
        (ControllerKind::Ours2, Some(&ours2)),
    ] {
        for noise in [NoiseMode::Clean, NoiseMode::Muscle] {
            let trials = run_cell(kind, noise, base, basic, net, &spec.seeds, spec.max_steps, None)?;
            rows.extend(trials.iter().map(|t| trial_row(kind, noise, t)));
            rows.push(summarize(kind, noise, &trials));
        }
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Candidate values for the Basic-gain grid search.
#[derive(Debug, Clone)]
pub struct TuningGrid {
    pub k_energy: Vec<f64>,
    pub e_target: Vec<f64>,
    pub q_s_flight: Vec<f64>,
    pub kp_slide: Vec<f64>,
    pub kp_posture: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            k_energy: vec![2.0, 10.0, 40.0],
            e_target: vec![60.0, 70.0, 80.0],
            q_s_flight: vec![0.15, 0.25, 0.35],
            kp_slide: vec![150.0, 300.0, 450.0, 800.0],
            kp_posture: vec![100.0, 200.0, 400.0],
        }
    }
}

impl TuningGrid {
    /// Every combination; damping gains follow the stiffness gains.
    pub fn candidates(&self, template: &BasicGains) -> Vec<BasicGains> {
        let mut out = Vec::new();
        for &k_energy in &self.k_energy {
            for &e_target in &self.e_target {
                for &q_s_flight in &self.q_s_flight {
                    for &kp_slide in &self.kp_slide {
                        for &kp_posture in &self.kp_posture {
                            out.push(BasicGains {
                                k_energy,
                                e_target,
                                q_s_flight,
                                kp_slide,
                                kd_slide: 2.0 * (10.0 * kp_slide).sqrt(),
                                kp_posture,
                                kd_posture: 0.1 * kp_posture,
                                ..*template
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Grid search in the noiseless environment. Candidates are ranked by
/// survival steps, then by jump count; the first best candidate wins ties.
pub fn tune_basic(
    grid: &TuningGrid,
    template: &BasicGains,
    base: &EnvConfig,
    seed: u64,
    max_steps: u64,
) -> Result<(BasicGains, TrialResult)> {
    let cfg = eval_env_config(base, Layout::Ours1, NoiseMode::Clean, max_steps);
    let mut best: Option<(BasicGains, TrialResult)> = None;
    for gains in grid.candidates(template) {
        let mut agent = BasicAgent(BasicController::new(gains));
        let r = run_episode(&mut agent, &cfg, seed, None)?;
        let better = match &best {
            None => true,
            Some((_, b)) => (r.survival_steps, r.n_jumps) > (b.survival_steps, b.n_jumps),
        };
        if better {
            best = Some((gains, r));
        }
    }
    best.ok_or_else(|| Error::Config("empty tuning grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_counter_uses_hysteresis() {
        let mut j = JumpCounter::new(0.5);
        for z in [0.5, 0.56, 0.6, 0.54, 0.56, 0.52, 0.57, 0.5] {
            j.observe(z);
        }
        assert_eq!(j.count, 2);
    }
}
