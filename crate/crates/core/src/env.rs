//! Reinforcement-learning environment around the simulated hopper.
//!
//! One tick: clamp and scale the action to a joint torque, distribute it over
//! the wires, weaken each wire by its friction factor, integrate the plant for
//! one control period, emulate the sensors, estimate the state, and assemble
//! the noised observation. Rewards and termination always use ground truth.

use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, contacts, ContactReport, RobotState, SimConfig};
use crate::error::{Error, Result};
use crate::estimation::sensors::{emulate_sensors, gaussian, gaussian_vec3, SensorNoise};
use crate::estimation::{StateConverter, StateEstimate};
use crate::kv::{self, KvMap};
use crate::rewards::{reward_total, up_component, RewardBreakdown, RewardConfig, RewardInputs};
use crate::tension::{TensionDistributor, DEFAULT_MIN_TENSION};
use crate::wire::{Vector6, WireGeometry};

pub const N_PREV: usize = 6;
pub const TAU_MIN: [f64; 3] = [-50.0, -50.0, -320.0];
pub const TAU_MAX: [f64; 3] = [50.0, 50.0, 90.0];
/// Smallest friction factor a wire can drift to.
pub const K_F_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Joint velocity estimate in the observation.
    Ours1,
    /// Previous joint angles instead of the velocity.
    Ours2,
}

impl Layout {
    pub fn obs_dim(self) -> usize {
        match self {
            Layout::Ours1 => 13 + 3 + 3 * N_PREV,
            Layout::Ours2 => 13 + 3 * N_PREV + 3 * N_PREV,
        }
    }

    pub fn from_obs_dim(dim: usize) -> Option<Self> {
        [Layout::Ours1, Layout::Ours2].into_iter().find(|l| l.obs_dim() == dim)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Ours1 => "ours1",
            Layout::Ours2 => "ours2",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ours1" => Ok(Layout::Ours1),
            "ours2" => Ok(Layout::Ours2),
            other => Err(Error::Config(format!("unknown layout `{other}`"))),
        }
    }
}

/// Domain randomization and observation noise, all as variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub obs_var_q_quat: f64,
    pub obs_var_qdot_rel: f64,
    pub obs_var_pdot_rel: f64,
    pub friction_base: f64,
    pub friction_var: f64,
    pub friction_walk_var: f64,
    pub init_pose_var: f64,
    pub ext_force_var: f64,
}

/// Muscle-length noise variance used by the noisy evaluation.
pub const EVAL_LENGTH_NOISE_VAR: f64 = 0.001;

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            obs_var_q_quat: 0.05,
            obs_var_qdot_rel: 0.05,
            obs_var_pdot_rel: 0.1,
            friction_base: 0.8,
            friction_var: 0.1,
            friction_walk_var: 0.01,
            init_pose_var: 0.03,
            ext_force_var: 10.0,
        }
    }
}

impl NoiseConfig {
    /// No randomness at all and lossless wires.
    pub fn noiseless() -> Self {
        Self {
            obs_var_q_quat: 0.0,
            obs_var_qdot_rel: 0.0,
            obs_var_pdot_rel: 0.0,
            friction_base: 1.0,
            friction_var: 0.0,
            friction_walk_var: 0.0,
            init_pose_var: 0.0,
            ext_force_var: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.obs_var_q_quat,
            self.obs_var_qdot_rel,
            self.obs_var_pdot_rel,
            self.friction_var,
            self.friction_walk_var,
            self.init_pose_var,
            self.ext_force_var,
        ];
        if all.iter().any(|v| !(*v >= 0.0)) || !(self.friction_base > 0.0) {
            return Err(Error::Config("noise variances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub sim: SimConfig,
    pub wire: WireGeometry,
    pub reward: RewardConfig,
    pub noise: NoiseConfig,
    pub sensors: SensorNoise,
    pub layout: Layout,
    pub max_steps: u64,
    pub f_min: f64,
    pub tau_min: Vector3<f64>,
    pub tau_max: Vector3<f64>,
    /// Seconds between external-force resamples.
    pub ext_force_period: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let wire = WireGeometry { foot_offset: sim.foot_offset, ..WireGeometry::default() };
        Self {
            sim,
            wire,
            reward: RewardConfig::default(),
            noise: NoiseConfig::default(),
            sensors: SensorNoise::default(),
            layout: Layout::Ours1,
            max_steps: 10_000,
            f_min: DEFAULT_MIN_TENSION,
            tau_min: Vector3::from(TAU_MIN),
            tau_max: Vector3::from(TAU_MAX),
            ext_force_period: 1.0,
        }
    }
}

impl EnvConfig {
    /// Deterministic environment: no noise, no friction loss, no pushes.
    pub fn noiseless(layout: Layout) -> Self {
        Self { noise: NoiseConfig::noiseless(), layout, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.reward.validate()?;
        self.noise.validate()?;
        if !(self.f_min >= 0.0) {
            return Err(Error::Config("f_min must be non-negative".into()));
        }
        if (0..3).any(|i| !(self.tau_min[i] < self.tau_max[i])) {
            return Err(Error::Config("tau_min must be below tau_max".into()));
        }
        if !(self.ext_force_period >= self.sim.control_dt) {
            return Err(Error::Config("ext_force_period shorter than a control tick".into()));
        }
        Ok(())
    }

    pub fn ticks_per_force_sample(&self) -> u64 {
        ((self.ext_force_period / self.sim.control_dt).round() as u64).max(1)
    }

    /// Mid-range slide position.
    pub fn slide_mid(&self) -> f64 {
        0.5 * (self.reward.q_min.z + self.reward.q_max.z)
    }

    pub fn read_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        self.sim.read_kv(kv)?;
        self.wire.foot_offset = self.sim.foot_offset;
        self.wire.read_kv(kv)?;
        self.reward.read_kv(kv)?;
        if let Some(layout) = kv.take_str("env.layout") {
            self.layout = layout.parse()?;
        }
        kv.set("env.max_steps", &mut self.max_steps)?;
        kv.set("env.f_min", &mut self.f_min)?;
        kv.set_vec3("env.tau_min", &mut self.tau_min)?;
        kv.set_vec3("env.tau_max", &mut self.tau_max)?;
        kv.set("env.ext_force_period", &mut self.ext_force_period)?;
        let n = &mut self.noise;
        kv.set("noise.obs_var_q_quat", &mut n.obs_var_q_quat)?;
        kv.set("noise.obs_var_qdot_rel", &mut n.obs_var_qdot_rel)?;
        kv.set("noise.obs_var_pdot_rel", &mut n.obs_var_pdot_rel)?;
        kv.set("noise.friction_base", &mut n.friction_base)?;
        kv.set("noise.friction_var", &mut n.friction_var)?;
        kv.set("noise.friction_walk_var", &mut n.friction_walk_var)?;
        kv.set("noise.init_pose_var", &mut n.init_pose_var)?;
        kv.set("noise.ext_force_var", &mut n.ext_force_var)?;
        let s = &mut self.sensors;
        kv.set("sensor.accel_var", &mut s.accel_var)?;
        kv.set("sensor.gyro_var", &mut s.gyro_var)?;
        kv.set("sensor.length_var", &mut s.length_var)?;
        kv.set("sensor.length_rate_var", &mut s.length_rate_var)?;
        kv.set("sensor.vo_var", &mut s.vo_var)?;
        self.validate()
    }

    pub fn write_kv(&self, out: &mut String) {
        self.sim.write_kv(out);
        self.wire.write_kv(out);
        self.reward.write_kv(out);
        kv::write_display(out, "env.layout", self.layout);
        kv::write_display(out, "env.max_steps", self.max_steps);
        kv::write_f64(out, "env.f_min", self.f_min);
        kv::write_vec3(out, "env.tau_min", &self.tau_min);
        kv::write_vec3(out, "env.tau_max", &self.tau_max);
        kv::write_f64(out, "env.ext_force_period", self.ext_force_period);
        let n = &self.noise;
        kv::write_f64(out, "noise.obs_var_q_quat", n.obs_var_q_quat);
        kv::write_f64(out, "noise.obs_var_qdot_rel", n.obs_var_qdot_rel);
        kv::write_f64(out, "noise.obs_var_pdot_rel", n.obs_var_pdot_rel);
        kv::write_f64(out, "noise.friction_base", n.friction_base);
        kv::write_f64(out, "noise.friction_var", n.friction_var);
        kv::write_f64(out, "noise.friction_walk_var", n.friction_walk_var);
        kv::write_f64(out, "noise.init_pose_var", n.init_pose_var);
        kv::write_f64(out, "noise.ext_force_var", n.ext_force_var);
        let s = &self.sensors;
        kv::write_f64(out, "sensor.accel_var", s.accel_var);
        kv::write_f64(out, "sensor.gyro_var", s.gyro_var);
        kv::write_f64(out, "sensor.length_var", s.length_var);
        kv::write_f64(out, "sensor.length_rate_var", s.length_rate_var);
        kv::write_f64(out, "sensor.vo_var", s.vo_var);
    }
}

/// Affine map from `[-1, 1]` to `[tau_min, tau_max]`.
pub fn scale_action(a: &Vector3<f64>, tau_min: &Vector3<f64>, tau_max: &Vector3<f64>) -> Vector3<f64> {
    tau_min + (tau_max - tau_min).component_mul(&a.add_scalar(1.0)) * 0.5
}

/// Inverse of [`scale_action`].
pub fn unscale_action(tau: &Vector3<f64>, tau_min: &Vector3<f64>, tau_max: &Vector3<f64>) -> Vector3<f64> {
    (tau - tau_min).component_div(&(tau_max - tau_min)) * 2.0 - Vector3::repeat(1.0)
}

pub fn clamp_action(a: &Vector3<f64>) -> Vector3<f64> {
    a.map(|x| x.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    StepLimit,
    JointRange,
    LegTilt,
}

impl Termination {
    /// True for failures; the step limit is a truncation.
    pub fn is_failure(self) -> bool {
        !matches!(self, Termination::StepLimit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::StepLimit => "step_limit",
            Termination::JointRange => "joint_range",
            Termination::LegTilt => "leg_tilt",
        }
    }
}

/// Minimum `(R_leg e_z) . e_z` before the episode ends (leg tilted past 60 degrees).
pub const LEG_TILT_LIMIT: f64 = 0.5;

pub fn check_termination(tick: u64, max_steps: u64, q: &Vector3<f64>, leg_up: f64, reward: &RewardConfig) -> Option<Termination> {
    if !reward.in_range(q) {
        Some(Termination::JointRange)
    } else if leg_up < LEG_TILT_LIMIT {
        Some(Termination::LegTilt)
    } else if tick > max_steps {
        Some(Termination::StepLimit)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub layout: Layout,
    pub values: Vec<f64>,
}

/// Newest-first ring of the last `N_PREV` values.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    items: [Vector3<f64>; N_PREV],
}

impl History {
    pub fn filled(v: Vector3<f64>) -> Self {
        Self { items: [v; N_PREV] }
    }

    pub fn push(&mut self, v: Vector3<f64>) {
        self.items.rotate_right(1);
        self.items[0] = v;
    }

    pub fn items(&self) -> &[Vector3<f64>; N_PREV] {
        &self.items
    }
}

fn canonical(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

/// Assembles and noises the observation. Returns it with the noised joint
/// angles, which are what enters the angle history.
pub fn build_observation<R: rand::Rng + ?Sized>(
    layout: Layout,
    est: &StateEstimate,
    q_hist: &History,
    tau_hist: &History,
    c: f64,
    noise: &NoiseConfig,
    rng: &mut R,
) -> (Observation, Vector3<f64>) {
    let p_dot = est.p_dot + gaussian_vec3(rng, noise.obs_var_pdot_rel) * (c * est.p_dot.norm());
    let mut quat = canonical(&est.orientation);
    for v in quat.iter_mut() {
        *v += c * gaussian(rng, noise.obs_var_q_quat);
    }
    let norm = quat.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in quat.iter_mut() {
        *v /= norm;
    }
    let q = est.q + gaussian_vec3(rng, noise.obs_var_q_quat) * c;

    let mut values = Vec::with_capacity(layout.obs_dim());
    values.extend_from_slice(p_dot.as_slice());
    values.extend_from_slice(&quat);
    values.extend_from_slice(est.omega.as_slice());
    values.extend_from_slice(q.as_slice());
    match layout {
        Layout::Ours1 => {
            let q_dot = est.q_dot + gaussian_vec3(rng, noise.obs_var_qdot_rel) * (c * est.q_dot.norm());
            values.extend_from_slice(q_dot.as_slice());
        }
        Layout::Ours2 => {
            for h in q_hist.items() {
                values.extend_from_slice(h.as_slice());
            }
        }
    }
    for h in tau_hist.items() {
        values.extend_from_slice(h.as_slice());
    }
    assert_eq!(values.len(), layout.obs_dim());
    (Observation { layout, values }, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSummary {
    pub leg_tip_z: f64,
    pub landing_z: f64,
    pub leg_in_contact: bool,
    pub landing_in_contact: bool,
}

impl From<&ContactReport> for ContactSummary {
    fn from(c: &ContactReport) -> Self {
        Self {
            leg_tip_z: c.leg_tip_height,
            landing_z: c.landing_leg_min_height,
            leg_in_contact: c.leg_in_contact,
            landing_in_contact: c.landing_in_contact,
        }
    }
}

/// Everything logged for one control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub p: Vector3<f64>,
    /// w, x, y, z.
    pub quat: [f64; 4],
    pub p_dot: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub q: Vector3<f64>,
    pub q_dot: Vector3<f64>,
    pub est_q: Vector3<f64>,
    pub est_q_dot: Vector3<f64>,
    pub tau_ref: Vector3<f64>,
    pub f_ref: Vector6,
    /// Friction scales in effect during this tick.
    pub k_f: Vector6,
    pub applied_torque: Vector3<f64>,
    pub degraded: bool,
    pub over_max_tension: bool,
    pub ext_force: Vector3<f64>,
    pub contacts: ContactSummary,
    pub reward_inputs: RewardInputs,
    pub reward: RewardBreakdown,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub termination: Option<Termination>,
    pub record: TickRecord,
}

pub struct HopperEnv {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    state: RobotState,
    converter: StateConverter,
    distributor: TensionDistributor,
    estimate: StateEstimate,
    contacts: ContactReport,
    tick: u64,
    c: f64,
    k_f: Vector6,
    ext_force: Vector3<f64>,
    q_hist: History,
    tau_hist: History,
    episode_start_q: Vector3<f64>,
}

impl HopperEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let state = RobotState::standing(&cfg.sim, Vector3::new(0.0, 0.0, cfg.slide_mid()));
        let contacts = contacts(&state, &cfg.sim);
        let mut env = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            converter: StateConverter::at_truth(&state),
            distributor: TensionDistributor::new(cfg.f_min),
            estimate: truth_estimate(&state),
            contacts,
            state,
            tick: 0,
            c: 0.0,
            k_f: Vector6::repeat(1.0),
            ext_force: Vector3::zeros(),
            q_hist: History::filled(Vector3::zeros()),
            tau_hist: History::filled(Vector3::zeros()),
            episode_start_q: Vector3::zeros(),
            cfg,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn estimate(&self) -> &StateEstimate {
        &self.estimate
    }

    pub fn contact_report(&self) -> &ContactReport {
        &self.contacts
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn curriculum(&self) -> f64 {
        self.c
    }

    pub fn k_f(&self) -> &Vector6 {
        &self.k_f
    }

    pub fn external_force(&self) -> &Vector3<f64> {
        &self.ext_force
    }

    pub fn episode_start_q(&self) -> &Vector3<f64> {
        &self.episode_start_q
    }

    pub fn set_curriculum(&mut self, c: f64) {
        self.c = c.clamp(0.0, 1.0);
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Starts a new episode, continuing the environment's random stream.
    pub fn reset(&mut self) -> Observation {
        let c = self.c;
        let n = self.cfg.noise;
        let q = Vector3::new(
            c * gaussian(&mut self.rng, n.init_pose_var),
            c * gaussian(&mut self.rng, n.init_pose_var),
            self.cfg.slide_mid(),
        );
        self.state = RobotState::standing(&self.cfg.sim, q);
        self.contacts = contacts(&self.state, &self.cfg.sim);
        for k in self.k_f.iter_mut() {
            *k = (n.friction_base + gaussian(&mut self.rng, n.friction_var)).clamp(K_F_FLOOR, 1.0);
        }
        self.ext_force = gaussian_vec3(&mut self.rng, n.ext_force_var) * c;
        self.tick = 0;
        self.converter = StateConverter::at_truth(&self.state);
        self.distributor.reset();
        self.estimate = truth_estimate(&self.state);
        self.episode_start_q = q;
        self.q_hist = History::filled(q);
        self.tau_hist = History::filled(Vector3::zeros());
        let (obs, _) = build_observation(self.cfg.layout, &self.estimate, &self.q_hist, &self.tau_hist, c, &n, &mut self.rng);
        obs
    }

    /// Resets with a fresh random stream.
    pub fn reset_with_seed(&mut self, seed: u64) -> Observation {
        self.reseed(seed);
        self.reset()
    }

    pub fn step(&mut self, action: &Vector3<f64>) -> Result<StepOutcome> {
        if !action.iter().all(|a| a.is_finite()) {
            return Err(Error::NonFiniteState("action"));
        }
        let cfg = &self.cfg;
        let a = clamp_action(action);
        let tau_ref = scale_action(&a, &cfg.tau_min, &cfg.tau_max);
        let sol = self.distributor.solve(&cfg.wire, &self.state.q, &tau_ref)?;
        let applied = self.k_f.component_mul(&sol.f_ref);
        let applied_torque = cfg.wire.torque_from_tensions(&self.state.q, &applied);

        let p_dot_before = self.state.p_dot;
        let mut s = self.state.clone();
        for _ in 0..cfg.sim.substeps() {
            let tau = cfg.wire.torque_from_tensions(&s.q, &applied);
            s = dynamics::step(&s, &tau, &self.ext_force, &cfg.sim)?;
        }
        self.state = s;
        self.tick += 1;
        let c = self.c;
        let n = cfg.noise;

        let k_f_used = self.k_f;
        for k in self.k_f.iter_mut() {
            *k = (*k + c * gaussian(&mut self.rng, n.friction_walk_var)).clamp(K_F_FLOOR, 1.0);
        }
        let ext_force_used = self.ext_force;
        if self.tick.is_multiple_of(cfg.ticks_per_force_sample()) {
            self.ext_force = gaussian_vec3(&mut self.rng, n.ext_force_var) * c;
        }

        let a_world = (self.state.p_dot - p_dot_before) / cfg.sim.control_dt;
        let readings = emulate_sensors(&self.state, &a_world, cfg.sim.gravity, &cfg.wire, &cfg.sensors, &mut self.rng);
        self.estimate = self.converter.update(&readings, &cfg.wire, cfg.sim.control_dt);
        self.contacts = contacts(&self.state, &cfg.sim);

        self.tau_hist.push(tau_ref);
        let (obs, noised_q) =
            build_observation(cfg.layout, &self.estimate, &self.q_hist, &self.tau_hist, c, &n, &mut self.rng);
        self.q_hist.push(noised_q);

        let leg_up = up_component(&self.contacts.leg_rotation);
        let inputs = RewardInputs {
            p_z: self.state.p.z,
            p_dot: self.state.p_dot,
            omega_z: self.state.omega.z,
            body_up: up_component(&self.state.r),
            leg_up,
            action: a,
            leg_tip_z: self.contacts.leg_tip_height,
            landing_z: self.contacts.landing_leg_min_height,
            q: self.state.q,
            c,
        };
        let reward = reward_total(&cfg.reward, &inputs);
        let termination = check_termination(self.tick, cfg.max_steps, &self.state.q, leg_up, &cfg.reward);

        let record = TickRecord {
            tick: self.tick,
            t: self.tick as f64 * cfg.sim.control_dt,
            p: self.state.p,
            quat: canonical(&self.state.quaternion()),
            p_dot: self.state.p_dot,
            omega: self.state.omega,
            q: self.state.q,
            q_dot: self.state.q_dot,
            est_q: self.estimate.q,
            est_q_dot: self.estimate.q_dot,
            tau_ref,
            over_max_tension: sol.exceeds_max_tension(),
            f_ref: sol.f_ref,
            k_f: k_f_used,
            applied_torque,
            degraded: sol.degraded,
            ext_force: ext_force_used,
            contacts: ContactSummary::from(&self.contacts),
            reward_inputs: inputs,
            reward,
            termination,
        };
        Ok(StepOutcome { obs, reward, termination, record })
    }
}

/// Survival steps of an episode that ended on `terminal_tick`.
pub fn survival_steps(terminal_tick: u64) -> u64 {
    terminal_tick.saturating_sub(1)
}

fn truth_estimate(state: &RobotState) -> StateEstimate {
    StateEstimate {
        p_dot: state.p_dot,
        orientation: state.quaternion(),
        omega: state.omega,
        q: state.q,
        q_dot: state.q_dot,
    }
}
