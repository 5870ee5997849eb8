//! Fixed-step rigid-body simulation of the monoped.
//!
//! Two rigid bodies: the main body (floating base, 6 DOF) and the leg, hung
//! from the body origin through a roll/pitch gimbal and a prismatic slide.
//! Generalized velocity is `v = (p_dot, omega, q_dot)` with `omega` in the
//! world frame. The equations of motion are assembled from the bodies'
//! world-frame Jacobians and integrated with semi-implicit Euler; the
//! translational part is advanced through the system center of mass so that
//! linear momentum only changes through external forces.
//!
//! Ground contact is a penalty spring-damper at the foot tip and at each
//! landing-leg point, with Coulomb friction regularized by a cap on the
//! tangential damping gain.

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{gimbal_rotation, leg_point_in_body, leg_point_jacobian, orthonormalize, rot_x, skew};
use crate::kv::{self, KvMap};

pub type Vector9 = SVector<f64, 9>;
pub type Matrix9 = SMatrix<f64, 9, 9>;
type Jacobian = SMatrix<f64, 3, 9>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub total_mass: f64,
    pub leg_mass: f64,
    pub overall_height: f64,
    pub overall_width: f64,
    /// Height of the box used for the main-body inertia.
    pub body_box_height: f64,
    pub gravity: f64,
    pub physics_dt: f64,
    pub control_dt: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_coeff: f64,
    /// Upper bound on the tangential damping gain (N·s/m) of the regularized friction law.
    pub friction_damping_cap: f64,
    pub body_inertia: Matrix3<f64>,
    pub leg_inertia: Matrix3<f64>,
    pub landing_leg_offsets: Vec<Vector3<f64>>,
    /// Distance from the gimbal center to the foot tip at `q_s = 0`.
    pub foot_offset: f64,
    pub leg_length: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let total_mass = 10.3;
        let leg_mass = 0.5;
        let overall_height = 1.07;
        let overall_width = 0.55;
        let body_box_height = 0.4;
        let leg_section = 0.02;
        let landing_depth = 0.55;
        Self {
            total_mass,
            leg_mass,
            overall_height,
            overall_width,
            body_box_height,
            gravity: 9.81,
            physics_dt: 1e-3,
            control_dt: 1e-2,
            contact_stiffness: 3e4,
            contact_damping: 300.0,
            friction_coeff: 0.8,
            friction_damping_cap: 100.0,
            body_inertia: box_inertia(total_mass - leg_mass, overall_width, overall_width, body_box_height),
            leg_inertia: box_inertia(leg_mass, leg_section, leg_section, overall_height),
            landing_leg_offsets: [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .iter()
                .map(|&(sx, sy)| Vector3::new(0.2 * sx, 0.2 * sy, -landing_depth))
                .collect(),
            foot_offset: 1.063,
            leg_length: overall_height,
        }
    }
}

/// Inertia of a uniform-density box about its center.
pub fn box_inertia(mass: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(
        mass * (y * y + z * z) / 12.0,
        mass * (x * x + z * z) / 12.0,
        mass * (x * x + y * y) / 12.0,
    ))
}

impl SimConfig {
    pub fn body_mass(&self) -> f64 {
        self.total_mass - self.leg_mass
    }

    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }

    /// Depth of the lowest landing-leg point below the body origin.
    pub fn landing_depth(&self) -> f64 {
        -self
            .landing_leg_offsets
            .iter()
            .map(|o| o.z)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let ratio = self.control_dt / self.physics_dt;
        if !(self.physics_dt > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Config(
                "control_dt must be a positive integer multiple of physics_dt".into(),
            ));
        }
        if !(self.total_mass > self.leg_mass && self.leg_mass > 0.0) {
            return Err(Error::Config("require total_mass > leg_mass > 0".into()));
        }
        if self.contact_stiffness < 0.0
            || self.contact_damping < 0.0
            || self.friction_coeff < 0.0
            || self.friction_damping_cap < 0.0
        {
            return Err(Error::Config("contact parameters must be non-negative".into()));
        }
        if self.landing_leg_offsets.is_empty() {
            return Err(Error::Config("at least one landing-leg point is required".into()));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.set("sim.total_mass", &mut self.total_mass)?;
        kv.set("sim.leg_mass", &mut self.leg_mass)?;
        kv.set("sim.overall_height", &mut self.overall_height)?;
        kv.set("sim.overall_width", &mut self.overall_width)?;
        kv.set("sim.body_box_height", &mut self.body_box_height)?;
        kv.set("sim.gravity", &mut self.gravity)?;
        kv.set("sim.physics_dt", &mut self.physics_dt)?;
        kv.set("sim.control_dt", &mut self.control_dt)?;
        kv.set("sim.contact_stiffness", &mut self.contact_stiffness)?;
        kv.set("sim.contact_damping", &mut self.contact_damping)?;
        kv.set("sim.friction_coeff", &mut self.friction_coeff)?;
        kv.set("sim.friction_damping_cap", &mut self.friction_damping_cap)?;
        kv.set("sim.foot_offset", &mut self.foot_offset)?;
        kv.set("sim.leg_length", &mut self.leg_length)?;
        let mut diag = self.body_inertia.diagonal();
        kv.set_vec3("sim.body_inertia", &mut diag)?;
        self.body_inertia = Matrix3::from_diagonal(&diag);
        let mut diag = self.leg_inertia.diagonal();
        kv.set_vec3("sim.leg_inertia", &mut diag)?;
        self.leg_inertia = Matrix3::from_diagonal(&diag);
        if let Some(n) = kv.take::<usize>("sim.landing_leg_count")? {
            self.landing_leg_offsets.resize(n, Vector3::zeros());
        }
        for (i, o) in self.landing_leg_offsets.iter_mut().enumerate() {
            kv.set_vec3(&format!("sim.landing_leg.{i}"), o)?;
        }
        self.validate()
    }

    pub fn write_kv(&self, out: &mut String) {
        kv::write_f64(out, "sim.total_mass", self.total_mass);
        kv::write_f64(out, "sim.leg_mass", self.leg_mass);
        kv::write_f64(out, "sim.overall_height", self.overall_height);
        kv::write_f64(out, "sim.overall_width", self.overall_width);
        kv::write_f64(out, "sim.body_box_height", self.body_box_height);
        kv::write_f64(out, "sim.gravity", self.gravity);
        kv::write_f64(out, "sim.physics_dt", self.physics_dt);
        kv::write_f64(out, "sim.control_dt", self.control_dt);
        kv::write_f64(out, "sim.contact_stiffness", self.contact_stiffness);
        kv::write_f64(out, "sim.contact_damping", self.contact_damping);
        kv::write_f64(out, "sim.friction_coeff", self.friction_coeff);
        kv::write_f64(out, "sim.friction_damping_cap", self.friction_damping_cap);
        kv::write_f64(out, "sim.foot_offset", self.foot_offset);
        kv::write_f64(out, "sim.leg_length", self.leg_length);
        kv::write_vec3(out, "sim.body_inertia", &self.body_inertia.diagonal());
        kv::write_vec3(out, "sim.leg_inertia", &self.leg_inertia.diagonal());
        kv::write_display(out, "sim.landing_leg_count", self.landing_leg_offsets.len());
        for (i, o) in self.landing_leg_offsets.iter().enumerate() {
            kv::write_vec3(out, &format!("sim.landing_leg.{i}"), o);
        }
    }
}

/// Ground truth of the simulated world.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub p: Vector3<f64>,
    pub r: Matrix3<f64>,
    pub p_dot: Vector3<f64>,
    /// World-frame angular velocity.
    pub omega: Vector3<f64>,
    /// Joint positions `(q_r, q_p, q_s)`.
    pub q: Vector3<f64>,
    pub q_dot: Vector3<f64>,
}

impl RobotState {
    /// Upright and at rest with the landing legs touching the floor.
    pub fn standing(cfg: &SimConfig, q: Vector3<f64>) -> Self {
        Self {
            p: Vector3::new(0.0, 0.0, cfg.landing_depth()),
            r: Matrix3::identity(),
            p_dot: Vector3::zeros(),
            omega: Vector3::zeros(),
            q,
            q_dot: Vector3::zeros(),
        }
    }

    pub fn velocity(&self) -> Vector9 {
        let mut v = Vector9::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.p_dot);
        v.fixed_rows_mut::<3>(3).copy_from(&self.omega);
        v.fixed_rows_mut::<3>(6).copy_from(&self.q_dot);
        v
    }

    /// Body orientation as a unit quaternion with non-negative scalar part.
    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        canonical_quaternion(&self.r)
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.r.iter().all(|x| x.is_finite())
            && self.p_dot.iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.q.iter().all(|x| x.is_finite())
            && self.q_dot.iter().all(|x| x.is_finite())
    }
}

pub fn canonical_quaternion(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    /// Foot-tip height above the floor (floor at z = 0).
    pub leg_tip_height: f64,
    /// Height of the lowest landing-leg point.
    pub landing_leg_min_height: f64,
    pub leg_in_contact: bool,
    pub landing_in_contact: bool,
    pub leg_rotation: Matrix3<f64>,
}

/// World-frame result of [`forward_kinematics`].
#[derive(Debug, Clone, PartialEq)]
pub struct LegPose {
    pub leg_tip: Vector3<f64>,
    pub landing_points: Vec<Vector3<f64>>,
    pub leg_rotation: Matrix3<f64>,
}

pub fn forward_kinematics(
    q: &Vector3<f64>,
    base_position: &Vector3<f64>,
    base_rotation: &Matrix3<f64>,
    cfg: &SimConfig,
) -> LegPose {
    let tip_body = leg_point_in_body(q, &Vector3::zeros(), cfg.foot_offset);
    LegPose {
        leg_tip: base_position + base_rotation * tip_body,
        landing_points: cfg
            .landing_leg_offsets
            .iter()
            .map(|o| base_position + base_rotation * o)
            .collect(),
        leg_rotation: base_rotation * gimbal_rotation(q),
    }
}

/// World-frame derivative of the foot-tip position with respect to `q` (base held fixed).
pub fn leg_tip_jacobian(q: &Vector3<f64>, base_rotation: &Matrix3<f64>, cfg: &SimConfig) -> Matrix3<f64> {
    base_rotation * leg_point_jacobian(q, &Vector3::zeros(), cfg.foot_offset)
}

pub fn contacts(state: &RobotState, cfg: &SimConfig) -> ContactReport {
    let pose = forward_kinematics(&state.q, &state.p, &state.r, cfg);
    let leg_tip_height = pose.leg_tip.z;
    let landing_leg_min_height = pose
        .landing_points
        .iter()
        .map(|p| p.z)
        .fold(f64::INFINITY, f64::min);
    ContactReport {
        leg_tip_height,
        landing_leg_min_height,
        leg_in_contact: leg_tip_height < 0.0,
        landing_in_contact: landing_leg_min_height < 0.0,
        leg_rotation: pose.leg_rotation,
    }
}

/// World-frame kinematic quantities of the leg needed by the equations of motion.
struct LegFrame {
    leg_rot: Matrix3<f64>,
    /// World roll and pitch joint axes.
    roll_axis: Vector3<f64>,
    pitch_axis: Vector3<f64>,
    /// Leg axis (points from foot toward the top of the leg).
    axis: Vector3<f64>,
    /// Leg center of mass relative to the body origin.
    com: Vector3<f64>,
    omega: Vector3<f64>,
    lin: Jacobian,
    ang: Jacobian,
}

impl LegFrame {
    fn new(state: &RobotState, cfg: &SimConfig) -> Self {
        let q = &state.q;
        let qd = &state.q_dot;
        let leg_rot = state.r * gimbal_rotation(q);
        let roll_axis = state.r * Vector3::x();
        let pitch_axis = state.r * rot_x(q.x) * Vector3::y();
        let axis = leg_rot * Vector3::z();
        let com = axis * (0.5 * cfg.leg_length + q.z - cfg.foot_offset);
        let omega = state.omega + roll_axis * qd.x + pitch_axis * qd.y;
        let lin = point_jacobian(&com, &roll_axis, &pitch_axis, &axis);
        let mut ang = Jacobian::zeros();
        ang.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        ang.set_column(6, &roll_axis);
        ang.set_column(7, &pitch_axis);
        Self { leg_rot, roll_axis, pitch_axis, axis, com, omega, lin, ang }
    }

    fn point_jacobian(&self, offset: &Vector3<f64>) -> Jacobian {
        point_jacobian(offset, &self.roll_axis, &self.pitch_axis, &self.axis)
    }

    fn com_velocity_rel(&self, q_dot: &Vector3<f64>) -> Vector3<f64> {
        self.omega.cross(&self.com) + self.axis * q_dot.z
    }
}

/// Velocity Jacobian of a point that moves with the leg, at `offset` from the body origin.
fn point_jacobian(offset: &Vector3<f64>, roll_axis: &Vector3<f64>, pitch_axis: &Vector3<f64>, axis: &Vector3<f64>) -> Jacobian {
    let mut j = Jacobian::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(offset)));
    j.set_column(6, &roll_axis.cross(offset));
    j.set_column(7, &pitch_axis.cross(offset));
    j.set_column(8, axis);
    j
}

fn body_point_jacobian(offset: &Vector3<f64>) -> Jacobian {
    let mut j = Jacobian::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(offset)));
    j
}

pub fn mass_matrix(state: &RobotState, cfg: &SimConfig) -> Matrix9 {
    let leg = LegFrame::new(state, cfg);
    mass_matrix_with(state, cfg, &leg)
}

fn mass_matrix_with(state: &RobotState, cfg: &SimConfig, leg: &LegFrame) -> Matrix9 {
    let mut m = Matrix9::zeros();
    let body_iw = state.r * cfg.body_inertia * state.r.transpose();
    let leg_iw = leg.leg_rot * cfg.leg_inertia * leg.leg_rot.transpose();
    for i in 0..3 {
        m[(i, i)] += cfg.body_mass();
    }
    {
        let mut block = m.fixed_view_mut::<3, 3>(3, 3);
        block += body_iw;
    }
    m += leg.lin.transpose() * leg.lin * cfg.leg_mass;
    m += leg.ang.transpose() * leg_iw * leg.ang;
    m
}

/// A single active contact force applied at a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub point: Vector3<f64>,
    pub force: Vector3<f64>,
    pub on_leg: bool,
}

fn penalty_force(height: f64, velocity: &Vector3<f64>, cfg: &SimConfig) -> Option<Vector3<f64>> {
    if height >= 0.0 {
        return None;
    }
    let normal = (-cfg.contact_stiffness * height - cfg.contact_damping * velocity.z).max(0.0);
    let vt = velocity.xy().norm();
    let gain = if vt > 0.0 {
        (cfg.friction_coeff * normal / vt).min(cfg.friction_damping_cap)
    } else {
        0.0
    };
    Some(Vector3::new(-gain * velocity.x, -gain * velocity.y, normal))
}

/// Penalty forces at every penetrating contact point together with their Jacobians.
fn active_contacts(state: &RobotState, cfg: &SimConfig, leg: &LegFrame) -> Vec<(ContactForce, Jacobian)> {
    let v = state.velocity();
    let mut out = Vec::new();
    let tip_offset = leg.axis * (state.q.z - cfg.foot_offset);
    let j = leg.point_jacobian(&tip_offset);
    let point = state.p + tip_offset;
    if let Some(force) = penalty_force(point.z, &(j * v), cfg) {
        out.push((ContactForce { point, force, on_leg: true }, j));
    }
    for o in &cfg.landing_leg_offsets {
        let offset = state.r * o;
        let j = body_point_jacobian(&offset);
        let point = state.p + offset;
        if let Some(force) = penalty_force(point.z, &(j * v), cfg) {
            out.push((ContactForce { point, force, on_leg: false }, j));
        }
    }
    out
}

pub fn contact_forces(state: &RobotState, cfg: &SimConfig) -> Vec<ContactForce> {
    let leg = LegFrame::new(state, cfg);
    active_contacts(state, cfg, &leg).into_iter().map(|(c, _)| c).collect()
}

/// Generalized accelerations and the total external force acting on the system.
fn accelerations(
    state: &RobotState,
    tau: &Vector3<f64>,
    external_force: &Vector3<f64>,
    cfg: &SimConfig,
    leg: &LegFrame,
) -> Result<(Vector9, Vector3<f64>)> {
    let m = mass_matrix_with(state, cfg, leg);
    let gravity = Vector3::new(0.0, 0.0, -cfg.gravity);
    let body_iw = state.r * cfg.body_inertia * state.r.transpose();
    let leg_iw = leg.leg_rot * cfg.leg_inertia * leg.leg_rot.transpose();
    let w = &state.omega;
    let qd = &state.q_dot;

    // Velocity-product accelerations of the leg (generalized accelerations set to zero).
    let alpha_bias = w.cross(&leg.roll_axis) * qd.x + (w + leg.roll_axis * qd.x).cross(&leg.pitch_axis) * qd.y;
    let accel_bias = alpha_bias.cross(&leg.com)
        + leg.omega.cross(&leg.omega.cross(&leg.com))
        + leg.omega.cross(&leg.axis) * (2.0 * qd.z);

    let mut f = Vector9::zeros();
    f.fixed_rows_mut::<3>(6).copy_from(tau);
    {
        let mut lin = f.fixed_rows_mut::<3>(0);
        lin += gravity * cfg.body_mass() + external_force;
    }
    {
        let mut ang = f.fixed_rows_mut::<3>(3);
        ang -= w.cross(&(body_iw * w));
    }
    f += leg.lin.transpose() * ((gravity - accel_bias) * cfg.leg_mass);
    f -= leg.ang.transpose() * (leg.omega.cross(&(leg_iw * leg.omega)) + leg_iw * alpha_bias);

    let mut total = gravity * cfg.total_mass + external_force;
    for (c, j) in active_contacts(state, cfg, leg) {
        f += j.transpose() * c.force;
        total += c.force;
    }
    let chol = m.cholesky().ok_or(Error::NonFiniteState("mass matrix"))?;
    Ok((chol.solve(&f), total))
}

/// Advances one physics substep.
pub fn step(
    state: &RobotState,
    tau: &Vector3<f64>,
    external_force: &Vector3<f64>,
    cfg: &SimConfig,
) -> Result<RobotState> {
    let dt = cfg.physics_dt;
    let leg = LegFrame::new(state, cfg);
    let (acc, force) = accelerations(state, tau, external_force, cfg, &leg)?;
    let mu = cfg.leg_mass / cfg.total_mass;

    let com = state.p + leg.com * mu;
    let com_dot = state.p_dot + leg.com_velocity_rel(&state.q_dot) * mu + force * (dt / cfg.total_mass);
    let omega = state.omega + acc.fixed_rows::<3>(3) * dt;
    let q_dot = state.q_dot + acc.fixed_rows::<3>(6) * dt;
    let r = orthonormalize(&(Rotation3::new(omega * dt).matrix() * state.r));
    let q = state.q + q_dot * dt;
    let com = com + com_dot * dt;

    let mut next = RobotState { p: com, r, p_dot: com_dot, omega, q, q_dot };
    let leg = LegFrame::new(&next, cfg);
    next.p = com - leg.com * mu;
    next.p_dot = com_dot - leg.com_velocity_rel(&next.q_dot) * mu;
    if !next.is_finite() {
        return Err(Error::NonFiniteState("after physics step"));
    }
    Ok(next)
}

/// Advances one control tick (`control_dt`) holding `tau` and `external_force` constant.
pub fn step_control(
    state: &RobotState,
    tau: &Vector3<f64>,
    external_force: &Vector3<f64>,
    cfg: &SimConfig,
) -> Result<RobotState> {
    let mut s = state.clone();
    for _ in 0..cfg.substeps() {
        s = step(&s, tau, external_force, cfg)?;
    }
    Ok(s)
}

/// Kinetic plus gravitational potential energy (floor at zero height).
pub fn mechanical_energy(state: &RobotState, cfg: &SimConfig) -> f64 {
    let leg = LegFrame::new(state, cfg);
    let v = state.velocity();
    let kinetic = 0.5 * v.dot(&(mass_matrix_with(state, cfg, &leg) * v));
    let potential = cfg.gravity * (cfg.body_mass() * state.p.z + cfg.leg_mass * (state.p.z + leg.com.z));
    kinetic + potential
}

pub fn linear_momentum(state: &RobotState, cfg: &SimConfig) -> Vector3<f64> {
    let leg = LegFrame::new(state, cfg);
    state.p_dot * cfg.total_mass + leg.com_velocity_rel(&state.q_dot) * cfg.leg_mass
}

pub fn center_of_mass(state: &RobotState, cfg: &SimConfig) -> Vector3<f64> {
    let leg = LegFrame::new(state, cfg);
    state.p + leg.com * (cfg.leg_mass / cfg.total_mass)
}
