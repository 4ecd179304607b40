//! Rigid-body dynamics: composite-rigid-body mass matrix, recursive
//! Newton–Euler inverse dynamics, a compliant ground-contact model and the
//! semi-implicit Euler rollout used as the simulator of the MPC.
//!
//! Generalized velocities are laid out as `[v_base (world), omega_base
//! (base frame), qdot]`; generalized forces are their power duals (world
//! force on the base, base-frame moment, joint torques).

use nalgebra::{DMatrix, DVector, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{link_frames, Configuration, ConfigurationTrajectory, LinkFrames};
use crate::model::RobotModel;
use crate::spatial::{self, cross_force, cross_motion, spatial as sv, SpatialVec};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub q: Configuration,
    pub v: DVector<f64>,
}

impl State {
    pub fn at_rest(q: Configuration) -> Self {
        let nv = 6 + q.joints.len();
        Self {
            q,
            v: DVector::zeros(nv),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_valid() && self.v.iter().all(|x| x.is_finite())
    }
}

/// `T + 1` states (initial state first) at a constant control period.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub dt: f64,
}

impl Trajectory {
    /// Every configuration, including the initial one.
    pub fn configurations(&self) -> ConfigurationTrajectory {
        ConfigurationTrajectory {
            configurations: self.states.iter().map(|s| s.q.clone()).collect(),
            dt: self.dt,
        }
    }

    /// The configurations reached by applying the controls, `q_1 .. q_T`.
    pub fn executed(&self) -> ConfigurationTrajectory {
        ConfigurationTrajectory {
            configurations: self.states.iter().skip(1).map(|s| s.q.clone()).collect(),
            dt: self.dt,
        }
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// `T × n_q` control matrix, one row per control period.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSequence {
    pub controls: DMatrix<f64>,
    pub dt: f64,
}

impl ControlSequence {
    pub fn len(&self) -> usize {
        self.controls.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.nrows() == 0
    }

    pub fn concat(&self, other: &ControlSequence) -> ControlSequence {
        let n = self.controls.ncols();
        let mut c = DMatrix::zeros(self.len() + other.len(), n);
        c.rows_mut(0, self.len()).copy_from(&self.controls);
        c.rows_mut(self.len(), other.len()).copy_from(&other.controls);
        ControlSequence {
            controls: c,
            dt: self.dt,
        }
    }
}

/// Compliant penalty contacts against a flat ground plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactModelParams {
    /// Normal stiffness, N/m.
    pub stiffness: f64,
    /// Normal damping, N·s/m.
    pub damping: f64,
    pub ground_height: f64,
    /// Overrides the model's friction coefficient when set.
    pub friction: Option<f64>,
    /// Tangential speed below which friction is scaled down linearly, m/s.
    pub regularization_velocity: f64,
}

impl Default for ContactModelParams {
    fn default() -> Self {
        Self {
            stiffness: 2e4,
            damping: 500.0,
            ground_height: 0.0,
            friction: None,
            regularization_velocity: 0.05,
        }
    }
}

impl ContactModelParams {
    pub fn check(&self) -> Result<()> {
        if !(self.stiffness > 0.0) || !(self.damping >= 0.0) || !(self.regularization_velocity > 0.0) {
            return Err(Error::InvalidArgument(
                "contact stiffness and regularization velocity must be > 0, damping >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// What a control row means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Joint torques, N·m.
    Torque,
    /// Joint position targets, rad, tracked by a PD law evaluated every
    /// physics substep. Missing gains fall back to the model's per-joint
    /// defaults.
    #[default]
    PdTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub control_dt: f64,
    pub substeps: usize,
    pub contact: ContactModelParams,
    pub mode: ControlMode,
    /// Per-joint PD gain overrides.
    #[serde(default)]
    pub kp: Option<Vec<f64>>,
    #[serde(default)]
    pub kd: Option<Vec<f64>>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            control_dt: 0.02,
            substeps: 10,
            contact: ContactModelParams::default(),
            mode: ControlMode::PdTarget,
            kp: None,
            kd: None,
        }
    }
}

impl DynamicsConfig {
    pub fn physics_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }

    pub fn gains(&self, model: &RobotModel) -> Result<(DVector<f64>, DVector<f64>)> {
        let pick = |over: &Option<Vec<f64>>, default: &dyn Fn(usize) -> f64, what: &'static str| match over {
            Some(v) if v.len() != model.nq() => Err(Error::mismatch(what, model.nq(), v.len())),
            Some(v) => Ok(DVector::from_column_slice(v)),
            None => Ok(DVector::from_fn(model.nq(), |j, _| default(j))),
        };
        Ok((
            pick(&self.kp, &|j| model.joint(j).kp, "kp gains")?,
            pick(&self.kd, &|j| model.joint(j).kd, "kd gains")?,
        ))
    }
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

fn link_inertia(model: &RobotModel, i: usize) -> Matrix6<f64> {
    let l = &model.links[i];
    spatial::inertia(l.mass, &l.com, &l.inertia)
}

#[inline]
fn motion_subspace(model: &RobotModel, i: usize) -> SpatialVec {
    sv(model.links[i].joint.as_ref().expect("joint").axis, Vector3::zeros())
}

/// Spatial velocity of every link in its own coordinates.
pub fn body_velocities(model: &RobotModel, frames: &LinkFrames, v: &DVector<f64>) -> Vec<SpatialVec> {
    let n = model.links.len();
    let r0 = frames.rot[0];
    let mut vel = Vec::with_capacity(n);
    let v_lin_body = r0.transpose() * Vector3::new(v[0], v[1], v[2]);
    vel.push(sv(Vector3::new(v[3], v[4], v[5]), v_lin_body));
    for i in 1..n {
        let p = model.links[i].parent.expect("parent");
        let vi = frames.xforms[i].apply_motion(&vel[p]) + motion_subspace(model, i) * v[6 + i - 1];
        vel.push(vi);
    }
    vel
}

/// World positions and velocities of the contact points.
pub fn contact_kinematics(
    model: &RobotModel,
    frames: &LinkFrames,
    vel: &[SpatialVec],
) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    model
        .contacts
        .iter()
        .map(|c| {
            let r = frames.rot[c.link];
            let p = frames.pos[c.link] + r * c.offset;
            let w = spatial::ang(&vel[c.link]);
            let l = spatial::lin(&vel[c.link]);
            (p, r * (l + w.cross(&c.offset)))
        })
        .collect()
}

/// Force of the compliant ground on one contact point.
pub fn contact_force(p: &Vector3<f64>, pdot: &Vector3<f64>, params: &ContactModelParams, mu: f64) -> Vector3<f64> {
    let depth = params.ground_height - p.z;
    if depth <= 0.0 {
        return Vector3::zeros();
    }
    let fn_ = (params.stiffness * depth - params.damping * pdot.z).max(0.0);
    if fn_ == 0.0 {
        return Vector3::zeros();
    }
    let vt = Vector3::new(pdot.x, pdot.y, 0.0);
    let speed = vt.norm();
    let ft = -vt * (mu * fn_ / speed.max(params.regularization_velocity));
    Vector3::new(ft.x, ft.y, fn_)
}

/// External spatial forces (link coordinates) from world point forces.
fn external_forces(model: &RobotModel, frames: &LinkFrames, forces: &[(usize, Vector3<f64>)]) -> Vec<SpatialVec> {
    let mut fext = vec![SpatialVec::zeros(); model.links.len()];
    for &(ci, f) in forces {
        let c = &model.contacts[ci];
        let rt = frames.rot[c.link].transpose();
        let fl = rt * f;
        fext[c.link] += sv(c.offset.cross(&fl), fl);
    }
    fext
}

/// Recursive Newton–Euler: generalized force needed for generalized
/// acceleration `a` given the body velocities and external link forces.
fn rnea(
    model: &RobotModel,
    frames: &LinkFrames,
    vel: &[SpatialVec],
    a: &DVector<f64>,
    fext: &[SpatialVec],
) -> DVector<f64> {
    let n = model.links.len();
    let r0 = frames.rot[0];
    let w0 = spatial::ang(&vel[0]);
    let vb = spatial::lin(&vel[0]);
    let a_lin_body = r0.transpose() * (Vector3::new(a[0], a[1], a[2]) - model.gravity) - w0.cross(&vb);
    let mut acc = Vec::with_capacity(n);
    acc.push(sv(Vector3::new(a[3], a[4], a[5]), a_lin_body));
    let mut f = Vec::with_capacity(n);
    let i0 = link_inertia(model, 0);
    f.push(i0 * acc[0] + cross_force(&vel[0], &(i0 * vel[0])) - fext[0]);
    for i in 1..n {
        let p = model.links[i].parent.expect("parent");
        let s = motion_subspace(model, i);
        let qd = vel[i] - frames.xforms[i].apply_motion(&vel[p]);
        let ai = frames.xforms[i].apply_motion(&acc[p]) + s * a[6 + i - 1] + cross_motion(&vel[i], &qd);
        let ii = link_inertia(model, i);
        f.push(ii * ai + cross_force(&vel[i], &(ii * vel[i])) - fext[i]);
        acc.push(ai);
    }
    let mut tau = DVector::zeros(model.nv());
    for i in (1..n).rev() {
        let s = motion_subspace(model, i);
        tau[6 + i - 1] = s.dot(&f[i]);
        let p = model.links[i].parent.expect("parent");
        let fp = frames.xforms[i].apply_force_transpose(&f[i]);
        f[p] += fp;
    }
    let n0 = spatial::ang(&f[0]);
    let f0 = r0 * spatial::lin(&f[0]);
    tau.fixed_rows_mut::<3>(0).copy_from(&f0);
    tau.fixed_rows_mut::<3>(3).copy_from(&n0);
    tau
}

/// Generalized force `τ_full` with `τ_full = M a + bias - Σ J_cᵀ f_c`.
/// The first six entries are the base wrench, the rest joint torques.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &Configuration,
    v: &DVector<f64>,
    a: &DVector<f64>,
    contact_forces: &[(usize, Vector3<f64>)],
) -> Result<DVector<f64>> {
    check_dims(model, q, v)?;
    if a.len() != model.nv() {
        return Err(Error::mismatch("acceleration", model.nv(), a.len()));
    }
    for &(c, _) in contact_forces {
        if c >= model.contacts.len() {
            return Err(Error::IndexOutOfRange {
                context: "contact point",
                index: c,
                len: model.contacts.len(),
            });
        }
    }
    let frames = link_frames(model, q);
    let vel = body_velocities(model, &frames, v);
    let fext = external_forces(model, &frames, contact_forces);
    Ok(rnea(model, &frames, &vel, a, &fext))
}

fn check_dims(model: &RobotModel, q: &Configuration, v: &DVector<f64>) -> Result<()> {
    if q.joints.len() != model.nq() {
        return Err(Error::mismatch("configuration joints", model.nq(), q.joints.len()));
    }
    if v.len() != model.nv() {
        return Err(Error::mismatch("velocity", model.nv(), v.len()));
    }
    Ok(())
}

/// Joint-space mass matrix via the composite-rigid-body algorithm.
pub fn mass_matrix(model: &RobotModel, q: &Configuration) -> DMatrix<f64> {
    let frames = link_frames(model, q);
    mass_matrix_from_frames(model, &frames)
}

pub fn mass_matrix_from_frames(model: &RobotModel, frames: &LinkFrames) -> DMatrix<f64> {
    let n = model.links.len();
    let nv = model.nv();
    let mut ic: Vec<Matrix6<f64>> = (0..n).map(|i| link_inertia(model, i)).collect();
    let xm: Vec<Matrix6<f64>> = frames.xforms.iter().map(|x| x.motion_matrix()).collect();
    for i in (1..n).rev() {
        let p = model.links[i].parent.expect("parent");
        let add = xm[i].transpose() * ic[i] * xm[i];
        ic[p] += add;
    }
    let mut m_int = DMatrix::zeros(nv, nv);
    m_int.view_mut((0, 0), (6, 6)).copy_from(&ic[0]);
    for i in 1..n {
        let ji = 6 + i - 1;
        let mut f = ic[i] * motion_subspace(model, i);
        m_int[(ji, ji)] = motion_subspace(model, i).dot(&f);
        let mut k = i;
        loop {
            f = frames.xforms[k].apply_force_transpose(&f);
            k = model.links[k].parent.expect("parent");
            if k == 0 {
                break;
            }
            let jk = 6 + k - 1;
            let h = motion_subspace(model, k).dot(&f);
            m_int[(ji, jk)] = h;
            m_int[(jk, ji)] = h;
        }
        for r in 0..6 {
            m_int[(r, ji)] = f[r];
            m_int[(ji, r)] = f[r];
        }
    }
    // Internal base coordinates are (omega_body, v_body); map to
    // (v_world, omega_body) with gen = T nu, M_gen = T M Tᵀ, applied
    // blockwise to rows then columns.
    let r = frames.rot[0];
    let mut m = DMatrix::zeros(nv, nv);
    for c in 0..nv {
        let w = Vector3::new(m_int[(0, c)], m_int[(1, c)], m_int[(2, c)]);
        let vb = Vector3::new(m_int[(3, c)], m_int[(4, c)], m_int[(5, c)]);
        let vw = r * vb;
        for k in 0..3 {
            m[(k, c)] = vw[k];
            m[(3 + k, c)] = w[k];
        }
        for row in 6..nv {
            m[(row, c)] = m_int[(row, c)];
        }
    }
    for row in 0..nv {
        let w = Vector3::new(m[(row, 0)], m[(row, 1)], m[(row, 2)]);
        let vb = Vector3::new(m[(row, 3)], m[(row, 4)], m[(row, 5)]);
        let vw = r * vb;
        for k in 0..3 {
            m[(row, k)] = vw[k];
            m[(row, 3 + k)] = w[k];
        }
    }
    // Remove round-off asymmetry.
    for i in 0..nv {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Contact-free forward dynamics `a = M⁻¹ (τ_full − bias)` on the free
/// coordinates; constrained base coordinates get zero acceleration.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &Configuration,
    v: &DVector<f64>,
    tau_full: &DVector<f64>,
    contact_forces: &[(usize, Vector3<f64>)],
) -> Result<DVector<f64>> {
    check_dims(model, q, v)?;
    let frames = link_frames(model, q);
    let vel = body_velocities(model, &frames, v);
    let fext = external_forces(model, &frames, contact_forces);
    solve_accel(model, &frames, &vel, tau_full, &fext)
}

fn free_dofs(model: &RobotModel) -> Vec<usize> {
    let mut free: Vec<usize> = model.base.free_base_dofs().to_vec();
    free.extend(6..model.nv());
    free
}

fn solve_accel(
    model: &RobotModel,
    frames: &LinkFrames,
    vel: &[SpatialVec],
    tau_full: &DVector<f64>,
    fext: &[SpatialVec],
) -> Result<DVector<f64>> {
    let nv = model.nv();
    let bias = rnea(model, frames, vel, &DVector::zeros(nv), fext);
    let m = mass_matrix_from_frames(model, frames);
    let free = free_dofs(model);
    let nf = free.len();
    let mut mf = DMatrix::zeros(nf, nf);
    let mut rhs = DVector::zeros(nf);
    for (a, &i) in free.iter().enumerate() {
        rhs[a] = tau_full[i] - bias[i];
        for (b, &j) in free.iter().enumerate() {
            mf[(a, b)] = m[(i, j)];
        }
    }
    let chol = mf.cholesky().ok_or_else(|| Error::NonFinite {
        quantity: "mass matrix (not positive definite)".into(),
        step: 0,
    })?;
    let af = chol.solve(&rhs);
    let mut acc = DVector::zeros(nv);
    for (a, &i) in free.iter().enumerate() {
        acc[i] = af[a];
    }
    Ok(acc)
}

/// Contact forces the compliant model produces in the given state.
pub fn compliant_contact_forces(
    model: &RobotModel,
    state: &State,
    params: &ContactModelParams,
) -> Vec<(usize, Vector3<f64>)> {
    let frames = link_frames(model, &state.q);
    let vel = body_velocities(model, &frames, &state.v);
    let mu = params.friction.unwrap_or(model.friction);
    contact_kinematics(model, &frames, &vel)
        .iter()
        .enumerate()
        .map(|(i, (p, pd))| (i, contact_force(p, pd, params, mu)))
        .filter(|(_, f)| *f != Vector3::zeros())
        .collect()
}

fn non_finite(quantity: &str) -> Error {
    Error::NonFinite {
        quantity: quantity.into(),
        step: 0,
    }
}

struct ActiveContact {
    index: usize,
    depth: f64,
    jac: DMatrix<f64>,
    friction_gain: f64,
}

/// One semi-implicit Euler step under joint torques `u` (clamped to the
/// model's torque limits).
pub fn step(model: &RobotModel, s: &State, u: &DVector<f64>, dt: f64, contact: &ContactModelParams) -> Result<State> {
    step_with_forces(model, s, u, dt, contact).map(|(s, _)| s)
}

/// Like [`step`], also returning the contact forces applied during the step.
///
/// Contact damping, the stiffness rate term and friction are treated
/// linearly implicitly in the new velocity; penetrating points whose normal
/// force would turn adhesive are released and the step is re-solved.
pub fn step_with_forces(
    model: &RobotModel,
    s: &State,
    u: &DVector<f64>,
    dt: f64,
    contact: &ContactModelParams,
) -> Result<(State, Vec<(usize, Vector3<f64>)>)> {
    check_dims(model, &s.q, &s.v)?;
    if u.len() != model.nq() {
        return Err(Error::mismatch("control", model.nq(), u.len()));
    }
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidArgument(format!("physics dt {dt} outside (0, 0.01]")));
    }
    let nv = model.nv();
    let frames = link_frames(model, &s.q);
    let vel = body_velocities(model, &frames, &s.v);
    let mu = contact.friction.unwrap_or(model.friction);
    let (k, c) = (contact.stiffness, contact.damping);
    let mut active = Vec::new();
    for (i, (p, pd)) in contact_kinematics(model, &frames, &vel).iter().enumerate() {
        if !(p.iter().chain(pd.iter()).all(|x| x.is_finite())) {
            return Err(non_finite(&format!("contact point `{}`", model.contacts[i].name)));
        }
        let depth = contact.ground_height - p.z;
        if depth <= 0.0 {
            continue;
        }
        let fn_est = (k * depth - c * pd.z).max(0.0);
        let c_def = &model.contacts[i];
        active.push(ActiveContact {
            index: i,
            depth,
            jac: crate::kinematics::point_jacobian(model, &frames, c_def.link, &c_def.offset),
            friction_gain: mu * fn_est / pd.xy().norm().max(contact.regularization_velocity),
        });
    }
    let mut tau = DVector::zeros(nv);
    for j in 0..model.nq() {
        let lim = model.joint(j).limits.torque;
        let t = u[j].clamp(-lim, lim);
        if !t.is_finite() {
            return Err(non_finite(&format!("torque of joint `{}`", model.joint(j).name)));
        }
        tau[6 + j] = t;
    }
    debug_assert!((0..model.nq()).all(|j| tau[6 + j].abs() <= model.joint(j).limits.torque));
    let no_ext = vec![SpatialVec::zeros(); model.links.len()];
    let bias = rnea(model, &frames, &vel, &DVector::zeros(nv), &no_ext);
    let m = mass_matrix_from_frames(model, &frames);
    let momentum = &m * &s.v + (&tau - &bias) * dt;
    let free = free_dofs(model);
    let normal_gain = c + k * dt;
    let mut on = vec![true; active.len()];
    let mut v = s.v.clone();
    loop {
        let mut a = m.clone();
        let mut rhs = momentum.clone();
        for (ac, _) in active.iter().zip(&on).filter(|(_, on)| **on) {
            let jx = ac.jac.row(0).transpose();
            let jy = ac.jac.row(1).transpose();
            let jz = ac.jac.row(2).transpose();
            a.ger(dt * normal_gain, &jz, &jz, 1.0);
            a.ger(dt * ac.friction_gain, &jx, &jx, 1.0);
            a.ger(dt * ac.friction_gain, &jy, &jy, 1.0);
            rhs.axpy(dt * k * ac.depth, &jz, 1.0);
        }
        let nf = free.len();
        let af = DMatrix::from_fn(nf, nf, |r, cc| a[(free[r], free[cc])]);
        let bf = DVector::from_fn(nf, |r, _| rhs[free[r]]);
        let chol = af
            .cholesky()
            .ok_or_else(|| non_finite("mass matrix (not positive definite)"))?;
        let vf = chol.solve(&bf);
        for (r, &i) in free.iter().enumerate() {
            v[i] = vf[r];
        }
        let mut released = false;
        for (ac, flag) in active.iter().zip(on.iter_mut()) {
            if *flag && k * ac.depth - normal_gain * ac.jac.row(2).dot(&v.transpose()) < 0.0 {
                *flag = false;
                released = true;
            }
        }
        if !released {
            break;
        }
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(non_finite(&format!("velocity[{i}]")));
    }
    let forces: Vec<(usize, Vector3<f64>)> = active
        .iter()
        .zip(&on)
        .filter(|(_, on)| **on)
        .map(|(ac, _)| {
            let pv = &ac.jac * &v;
            let fn_ = k * ac.depth - normal_gain * pv[2];
            (
                ac.index,
                Vector3::new(-ac.friction_gain * pv[0], -ac.friction_gain * pv[1], fn_),
            )
        })
        .collect();
    let mut q = s.q.integrate(&(&v * dt));
    for j in 0..model.nq() {
        let lim = &model.joint(j).limits;
        if q.joints[j] < lim.lower {
            q.joints[j] = lim.lower;
            v[6 + j] = v[6 + j].max(0.0);
        } else if q.joints[j] > lim.upper {
            q.joints[j] = lim.upper;
            v[6 + j] = v[6 + j].min(0.0);
        }
    }
    if !q.is_valid() {
        return Err(non_finite("configuration"));
    }
    Ok((State { q, v }, forces))
}

/// PD torque towards `target` (before torque clamping).
pub fn pd_torque(state: &State, target: &DVector<f64>, kp: &DVector<f64>, kd: &DVector<f64>) -> DVector<f64> {
    let n = target.len();
    DVector::from_fn(n, |j, _| {
        kp[j] * (target[j] - state.q.joints[j]) - kd[j] * state.v[6 + j]
    })
}

/// Holds one control row for `cfg.substeps` physics steps.
pub fn apply_control(
    model: &RobotModel,
    state: &State,
    u: &DVector<f64>,
    cfg: &DynamicsConfig,
    gains: &(DVector<f64>, DVector<f64>),
) -> Result<State> {
    let dt = cfg.physics_dt();
    let mut s = state.clone();
    for _ in 0..cfg.substeps {
        let torque = match cfg.mode {
            ControlMode::Torque => u.clone(),
            ControlMode::PdTarget => pd_torque(&s, u, &gains.0, &gains.1),
        };
        s = step(model, &s, &torque, dt, &cfg.contact)?;
    }
    Ok(s)
}

/// The rollout map: starts at `(q0, v = 0)` and applies every control row.
pub fn rollout(
    model: &RobotModel,
    q0: &Configuration,
    u: &ControlSequence,
    cfg: &DynamicsConfig,
) -> Result<Trajectory> {
    rollout_from(model, &State::at_rest(q0.clone()), u, cfg)
}

/// Continuation entry point accepting an arbitrary initial state.
pub fn rollout_from(model: &RobotModel, s0: &State, u: &ControlSequence, cfg: &DynamicsConfig) -> Result<Trajectory> {
    if cfg.substeps < 1 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    if u.controls.ncols() != model.nq() {
        return Err(Error::mismatch("control columns", model.nq(), u.controls.ncols()));
    }
    cfg.contact.check()?;
    let gains = cfg.gains(model)?;
    let cfg = DynamicsConfig {
        control_dt: u.dt,
        ..cfg.clone()
    };
    let mut states = Vec::with_capacity(u.len() + 1);
    states.push(s0.clone());
    for t in 0..u.len() {
        let row = u.controls.row(t).transpose();
        let next = apply_control(model, &states[t], &row, &cfg, &gains).map_err(|e| match e {
            Error::NonFinite { quantity, .. } => Error::NonFinite { quantity, step: t },
            other => other.with_context(format!("rollout step {t}")),
        })?;
        states.push(next);
    }
    Ok(Trajectory { states, dt: u.dt })
}

/// Kinetic plus gravitational potential energy.
pub fn total_energy(model: &RobotModel, s: &State) -> f64 {
    let frames = link_frames(model, &s.q);
    let m = mass_matrix_from_frames(model, &frames);
    let kinetic = 0.5 * s.v.dot(&(&m * &s.v));
    let potential: f64 = model
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| -l.mass * model.gravity.dot(&frames.point(i, &l.com)))
        .sum();
    kinetic + potential
}

/// Generalized velocities and accelerations of a configuration sequence:
/// central differences inside, one-sided at the ends; base orientation is
/// differenced through the quaternion logarithm.
pub fn finite_difference_derivatives(
    configurations: &[Configuration],
    dt: f64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let t = configurations.len();
    if t < 3 {
        return Err(Error::InvalidArgument(format!(
            "finite differences need at least 3 frames, got {t}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be > 0")));
    }
    let fwd: Vec<DVector<f64>> = configurations.windows(2).map(|w| w[0].difference(&w[1]) / dt).collect();
    let mut vel = Vec::with_capacity(t);
    vel.push(fwd[0].clone());
    for i in 1..t - 1 {
        vel.push(configurations[i - 1].difference(&configurations[i + 1]) / (2.0 * dt));
    }
    vel.push(fwd[t - 2].clone());
    let mut acc = Vec::with_capacity(t);
    for i in 1..t - 1 {
        acc.push((&fwd[i] - &fwd[i - 1]) / dt);
    }
    let first = acc[0].clone();
    let last = acc[acc.len() - 1].clone();
    acc.insert(0, first);
    acc.push(last);
    Ok((vel, acc))
}
