//! Forward kinematics, keypoint Jacobians and per-frame inverse kinematics
//! (the geometric retargeting baseline).

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::cost::{build_laplacian, CostWeights, LaplacianMatrix};
use crate::model::RobotModel;
use crate::spatial::{skew, Xform};
use crate::{Error, Result};

/// Floating-base configuration: base pose plus joint angles.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub joints: DVector<f64>,
}

impl Configuration {
    pub fn new(base_position: Vector3<f64>, base_orientation: UnitQuaternion<f64>, joints: DVector<f64>) -> Self {
        Self {
            base_position,
            base_orientation,
            joints,
        }
    }

    /// Base at the origin, identity orientation, zero joints.
    pub fn zero(model: &RobotModel) -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity(), DVector::zeros(model.nq()))
    }

    pub fn is_valid(&self) -> bool {
        (self.base_orientation.quaternion().norm() - 1.0).abs() < 1e-9
            && self.base_position.iter().all(|x| x.is_finite())
            && self.joints.iter().all(|x| x.is_finite())
    }

    /// `q ⊕ dv`: base translation in world frame, rotation vector applied on
    /// the body side, joints added.
    pub fn integrate(&self, dv: &DVector<f64>) -> Configuration {
        let dp = Vector3::new(dv[0], dv[1], dv[2]);
        let dw = Vector3::new(dv[3], dv[4], dv[5]);
        Configuration {
            base_position: self.base_position + dp,
            base_orientation: self.base_orientation * UnitQuaternion::from_scaled_axis(dw),
            joints: &self.joints + dv.rows(6, dv.len() - 6),
        }
    }

    /// Tangent vector `dv` such that `self.integrate(dv) == other`.
    pub fn difference(&self, other: &Configuration) -> DVector<f64> {
        let n = self.joints.len();
        let mut dv = DVector::zeros(6 + n);
        let dp = other.base_position - self.base_position;
        let dw = (self.base_orientation.inverse() * other.base_orientation).scaled_axis();
        dv.fixed_rows_mut::<3>(0).copy_from(&dp);
        dv.fixed_rows_mut::<3>(3).copy_from(&dw);
        dv.rows_mut(6, n).copy_from(&(&other.joints - &self.joints));
        dv
    }

    /// Flat `[x y z qw qx qy qz joints...]` layout used in trajectory files.
    pub fn to_row(&self) -> Vec<f64> {
        let q = self.base_orientation.quaternion();
        let mut row = vec![
            self.base_position.x,
            self.base_position.y,
            self.base_position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        row.extend(self.joints.iter());
        row
    }

    pub fn from_row(row: &[f64]) -> Result<Configuration> {
        if row.len() < 7 {
            return Err(Error::mismatch("configuration row", 7, row.len()));
        }
        let quat = nalgebra::Quaternion::new(row[3], row[4], row[5], row[6]);
        if !(quat.norm() > 1e-12) {
            return Err(Error::InvalidArgument("zero base quaternion".into()));
        }
        Ok(Configuration {
            base_position: Vector3::new(row[0], row[1], row[2]),
            // Already-unit rows are kept bit for bit so files round-trip.
            base_orientation: if (quat.norm() - 1.0).abs() < 1e-12 {
                UnitQuaternion::new_unchecked(quat)
            } else {
                UnitQuaternion::from_quaternion(quat)
            },
            joints: DVector::from_column_slice(&row[7..]),
        })
    }
}

/// Sequence of configurations sampled at a fixed period.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigurationTrajectory {
    pub configurations: Vec<Configuration>,
    pub dt: f64,
}

impl ConfigurationTrajectory {
    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }
}

/// World positions of the `m` keypoints at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub positions: Vec<Vector3<f64>>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `T` keypoint frames at a constant period, with the skeleton edges.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointTrajectory {
    pub names: Vec<String>,
    pub frames: Vec<KeypointSet>,
    pub dt: f64,
    pub adjacency: Vec<(usize, usize)>,
}

impl KeypointTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keypoint count `m`.
    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidArgument("keypoint trajectory has no frames".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("keypoint dt {} must be > 0", self.dt)));
        }
        for f in &self.frames {
            if f.len() != self.m() {
                return Err(Error::mismatch("keypoint frame", self.m(), f.len()));
            }
            if !f.positions.iter().all(|p| p.iter().all(|x| x.is_finite())) {
                return Err(Error::InvalidArgument("non-finite keypoint position".into()));
            }
        }
        Ok(())
    }

    /// Frames `[start, start + len)`, holding the last frame past the end.
    pub fn window(&self, start: usize, len: usize) -> KeypointTrajectory {
        let last = self.frames.len() - 1;
        KeypointTrajectory {
            names: self.names.clone(),
            frames: (start..start + len).map(|i| self.frames[i.min(last)].clone()).collect(),
            dt: self.dt,
            adjacency: self.adjacency.clone(),
        }
    }

    pub fn concat(&self, other: &KeypointTrajectory) -> KeypointTrajectory {
        let mut out = self.clone();
        out.frames.extend(other.frames.iter().cloned());
        out
    }
}

/// World pose of every link for one configuration.
#[derive(Clone, Debug)]
pub struct LinkFrames {
    pub rot: Vec<Matrix3<f64>>,
    pub pos: Vec<Vector3<f64>>,
    /// Parent-to-child transforms; entry 0 is unused.
    pub xforms: Vec<Xform>,
}

impl LinkFrames {
    pub fn point(&self, link: usize, offset: &Vector3<f64>) -> Vector3<f64> {
        self.pos[link] + self.rot[link] * offset
    }

    /// World-frame joint axis of joint `j` (child link `j + 1`).
    pub fn joint_axis(&self, model: &RobotModel, j: usize) -> Vector3<f64> {
        self.rot[j + 1] * model.joint(j).axis
    }
}

/// Link-frame composition from the base to every leaf.
pub fn link_frames(model: &RobotModel, q: &Configuration) -> LinkFrames {
    let n = model.links.len();
    let mut rot = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    let mut xforms = Vec::with_capacity(n);
    rot.push(*q.base_orientation.to_rotation_matrix().matrix());
    pos.push(q.base_position);
    xforms.push(Xform {
        rot: Matrix3::identity(),
        trans: Vector3::zeros(),
    });
    for (i, link) in model.links.iter().enumerate().skip(1) {
        let joint = link.joint.as_ref().expect("non-base link has a joint");
        let p = link.parent.expect("non-base link has a parent");
        let rj = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(joint.axis), q.joints[i - 1]);
        let r_pc = joint.origin_rotation.to_rotation_matrix().matrix() * rj.matrix();
        xforms.push(Xform {
            rot: r_pc,
            trans: joint.origin_translation,
        });
        let rw = rot[p] * r_pc;
        let pw = pos[p] + rot[p] * joint.origin_translation;
        rot.push(rw);
        pos.push(pw);
    }
    LinkFrames { rot, pos, xforms }
}

/// World positions of all keypoints.
pub fn keypoint_positions(model: &RobotModel, q: &Configuration) -> KeypointSet {
    let frames = link_frames(model, q);
    keypoints_from_frames(model, &frames)
}

pub fn keypoints_from_frames(model: &RobotModel, frames: &LinkFrames) -> KeypointSet {
    KeypointSet {
        positions: model
            .keypoints
            .iter()
            .map(|k| frames.point(k.link, &k.offset))
            .collect(),
    }
}

/// World positions of all contact points.
pub fn contact_positions(model: &RobotModel, q: &Configuration) -> Vec<Vector3<f64>> {
    let frames = link_frames(model, q);
    model.contacts.iter().map(|c| frames.point(c.link, &c.offset)).collect()
}

/// Applies [`keypoint_positions`] to every configuration.
pub fn fk_trajectory(model: &RobotModel, q: &ConfigurationTrajectory) -> KeypointTrajectory {
    KeypointTrajectory {
        names: model.keypoints.iter().map(|k| k.name.clone()).collect(),
        frames: q.configurations.iter().map(|c| keypoint_positions(model, c)).collect(),
        dt: q.dt,
        adjacency: model.adjacency.clone(),
    }
}

/// 3 × nv Jacobian of a point fixed on `link`, mapping the generalized
/// velocity `[v_base (world), omega_base (body), qdot]` to the point's world
/// velocity.
pub fn point_jacobian(model: &RobotModel, frames: &LinkFrames, link: usize, offset: &Vector3<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(3, model.nv());
    let p = frames.point(link, offset);
    add_point_jacobian(model, frames, link, &p, &mut jac, 0);
    jac
}

/// Writes the point Jacobian of world point `p` (attached to `link`) into
/// rows `row..row+3` of `jac`.
pub(crate) fn add_point_jacobian(
    model: &RobotModel,
    frames: &LinkFrames,
    link: usize,
    p: &Vector3<f64>,
    jac: &mut DMatrix<f64>,
    row: usize,
) {
    for d in 0..3 {
        jac[(row + d, d)] = 1.0;
    }
    let rel = p - frames.pos[0];
    let ang = -skew(&rel) * frames.rot[0];
    jac.view_mut((row, 3), (3, 3)).copy_from(&ang);
    let mut cur = link;
    while cur != 0 {
        let j = cur - 1;
        let axis = frames.joint_axis(model, j);
        let col = axis.cross(&(p - frames.pos[cur]));
        jac.view_mut((row, 6 + j), (3, 1)).copy_from(&col);
        cur = model.links[cur].parent.expect("non-base link has a parent");
    }
}

/// Keypoint Jacobian `J` with `keypoint velocity = J · v`. The base twist
/// convention is linear velocity in the world frame and angular velocity in
/// the base frame.
pub fn keypoint_jacobian(model: &RobotModel, q: &Configuration, k: usize) -> Result<DMatrix<f64>> {
    if k >= model.m() {
        return Err(Error::IndexOutOfRange {
            context: "keypoint",
            index: k,
            len: model.m(),
        });
    }
    let frames = link_frames(model, q);
    let kp = &model.keypoints[k];
    Ok(point_jacobian(model, &frames, kp.link, &kp.offset))
}

/// The model's default stance: stance joint angles, identity orientation,
/// base height chosen so the lowest contact point touches `z = 0`.
pub fn stance_configuration(model: &RobotModel) -> Configuration {
    let mut q = Configuration::new(Vector3::zeros(), UnitQuaternion::identity(), model.stance_joints());
    place_on_ground(model, &mut q);
    q
}

/// Shifts the base vertically so the lowest contact point is at `z = 0`.
/// Models without contact points are left untouched.
pub fn place_on_ground(model: &RobotModel, q: &mut Configuration) {
    let lowest = contact_positions(model, q)
        .iter()
        .map(|p| p.z)
        .fold(f64::INFINITY, f64::min);
    if lowest.is_finite() {
        q.base_position.z -= lowest;
    }
}

/// Clamps joint angles into their position limits.
pub fn clamp_to_limits(model: &RobotModel, q: &mut Configuration) {
    for (j, joint) in model.joints().enumerate() {
        q.joints[j] = q.joints[j].clamp(joint.limits.lower, joint.limits.upper);
    }
}

/// Options of the per-frame inverse kinematics.
#[derive(Clone, Debug)]
pub struct IkOptions {
    pub weights: CostWeights,
    /// Levenberg–Marquardt damping.
    pub damping: f64,
    pub max_iterations: usize,
    /// Stop once the cost decrease of one iteration drops below this.
    pub tolerance: f64,
    /// Maximum backtracking halvings per iteration.
    pub max_halvings: usize,
    /// Quadratic penalty weight on keypoint heights below the ground; `0` disables.
    pub ground_penalty: f64,
    /// Maps keypoint names in the reference onto model keypoint names.
    /// Empty means "match by identical name, falling back to index order".
    pub keypoint_map: Vec<(String, String)>,
    /// Warm start of the first frame; defaults to the stance configuration
    /// moved under the first frame's keypoints.
    pub initial: Option<Configuration>,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            damping: 1e-3,
            max_iterations: 50,
            tolerance: 1e-8,
            max_halvings: 8,
            ground_penalty: 100.0,
            keypoint_map: Vec::new(),
            initial: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IkFrameDiagnostics {
    pub iterations: usize,
    /// Combined cost after each accepted iteration, starting with the warm start.
    pub cost_history: Vec<f64>,
    /// Unweighted squared keypoint error of the final iterate.
    pub spatial_residual: f64,
}

#[derive(Clone, Debug)]
pub struct GeometricRetarget {
    pub trajectory: ConfigurationTrajectory,
    pub frames: Vec<IkFrameDiagnostics>,
}

/// For every model keypoint, the index of the reference keypoint that
/// drives it, if any.
pub fn resolve_keypoint_map(
    model: &RobotModel,
    reference_names: &[String],
    map: &[(String, String)],
) -> Result<Vec<Option<usize>>> {
    if map.is_empty() {
        let by_name: Vec<Option<usize>> = model
            .keypoints
            .iter()
            .map(|k| reference_names.iter().position(|n| n == &k.name))
            .collect();
        if by_name.iter().all(|x| x.is_some()) {
            return Ok(by_name);
        }
        if reference_names.len() != model.m() {
            return Err(Error::mismatch(
                "reference keypoint count",
                model.m(),
                reference_names.len(),
            ));
        }
        return Ok((0..model.m()).map(Some).collect());
    }
    let mut out = vec![None; model.m()];
    for (src, dst) in map {
        let s = reference_names
            .iter()
            .position(|n| n == src)
            .ok_or_else(|| Error::InvalidArgument(format!("reference has no keypoint `{src}`")))?;
        let d = model
            .keypoint_index(dst)
            .ok_or_else(|| Error::InvalidArgument(format!("model has no keypoint `{dst}`")))?;
        out[d] = Some(s);
    }
    Ok(out)
}

struct FrameProblem<'a> {
    model: &'a RobotModel,
    laplacian: &'a LaplacianMatrix,
    opts: &'a IkOptions,
    targets: Vec<Vector3<f64>>,
    /// Per-keypoint weight; zero for keypoints without a target.
    kp_weights: Vec<f64>,
    free: Vec<usize>,
}

impl FrameProblem<'_> {
    fn residual(&self, q: &Configuration, with_jacobian: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let model = self.model;
        let m = model.m();
        let frames = link_frames(model, q);
        let kp = keypoints_from_frames(model, &frames);
        let diffs: Vec<Vector3<f64>> = (0..m)
            .map(|k| {
                if self.kp_weights[k] > 0.0 {
                    kp.positions[k] - self.targets[k]
                } else {
                    Vector3::zeros()
                }
            })
            .collect();
        let wp = self.opts.weights.w_p;
        let wl = self.opts.weights.w_l;
        let wg = self.opts.ground_penalty;
        let nrows = 3 * m + 3 * m + m;
        let mut r = DVector::zeros(nrows);
        for k in 0..m {
            let s = (wp * self.kp_weights[k]).sqrt();
            r.fixed_rows_mut::<3>(3 * k).copy_from(&(diffs[k] * s));
        }
        let l = &self.laplacian.matrix;
        let sl = (wl / m.max(1) as f64).sqrt();
        for k in 0..m {
            let mut acc = Vector3::zeros();
            for (j, d) in diffs.iter().enumerate() {
                acc += d * l[(k, j)];
            }
            let s = sl * self.kp_weights[k].sqrt();
            r.fixed_rows_mut::<3>(3 * m + 3 * k).copy_from(&(acc * s));
        }
        let sg = wg.sqrt();
        for k in 0..m {
            r[6 * m + k] = sg * kp.positions[k].z.min(0.0);
        }
        if !with_jacobian {
            return (r, None);
        }
        let nv = model.nv();
        let mut jp = DMatrix::zeros(3 * m, nv);
        for (k, key) in model.keypoints.iter().enumerate() {
            let p = kp.positions[k];
            add_point_jacobian(model, &frames, key.link, &p, &mut jp, 3 * k);
        }
        let mut jac = DMatrix::zeros(nrows, self.free.len());
        for (c, &col) in self.free.iter().enumerate() {
            for k in 0..m {
                if self.kp_weights[k] > 0.0 {
                    let s = (wp * self.kp_weights[k]).sqrt();
                    for d in 0..3 {
                        jac[(3 * k + d, c)] = s * jp[(3 * k + d, col)];
                    }
                }
            }
            for k in 0..m {
                let s = sl * self.kp_weights[k].sqrt();
                if s == 0.0 {
                    continue;
                }
                for j in 0..m {
                    if self.kp_weights[j] == 0.0 || l[(k, j)] == 0.0 {
                        continue;
                    }
                    for d in 0..3 {
                        jac[(3 * m + 3 * k + d, c)] += s * l[(k, j)] * jp[(3 * j + d, col)];
                    }
                }
            }
            for k in 0..m {
                if kp.positions[k].z < 0.0 {
                    jac[(6 * m + k, c)] = sg * jp[(3 * k + 2, col)];
                }
            }
        }
        (r, Some(jac))
    }

    fn cost(&self, q: &Configuration) -> f64 {
        self.residual(q, false).0.norm_squared()
    }

    fn spatial_residual(&self, q: &Configuration) -> f64 {
        let kp = keypoint_positions(self.model, q);
        (0..self.model.m())
            .filter(|&k| self.kp_weights[k] > 0.0)
            .map(|k| (kp.positions[k] - self.targets[k]).norm_squared())
            .sum()
    }

    fn step_from(&self, q: &Configuration, delta: &DVector<f64>, scale: f64) -> Configuration {
        let mut dv = DVector::zeros(self.model.nv());
        for (c, &col) in self.free.iter().enumerate() {
            dv[col] = delta[c] * scale;
        }
        let mut next = q.integrate(&dv);
        clamp_to_limits(self.model, &mut next);
        next
    }

    /// Damped least squares with backtracking; the accepted cost never increases.
    fn solve(&self, start: Configuration) -> (Configuration, IkFrameDiagnostics) {
        let mut q = start;
        let mut cost = self.cost(&q);
        let mut diag = IkFrameDiagnostics {
            cost_history: vec![cost],
            ..Default::default()
        };
        for _ in 0..self.opts.max_iterations {
            let (r, jac) = self.residual(&q, true);
            let jac = jac.expect("jacobian requested");
            let jt = jac.transpose();
            let mut h = &jt * &jac;
            for i in 0..h.nrows() {
                h[(i, i)] += self.opts.damping;
            }
            let g = -(&jt * &r);
            if g.amax() < 1e-12 {
                break;
            }
            let Some(chol) = h.cholesky() else { break };
            let delta = chol.solve(&g);
            let mut accepted = None;
            let mut scale = 1.0;
            for _ in 0..=self.opts.max_halvings {
                let cand = self.step_from(&q, &delta, scale);
                let c = self.cost(&cand);
                if c < cost {
                    accepted = Some((cand, c));
                    break;
                }
                scale *= 0.5;
            }
            let Some((next, next_cost)) = accepted else { break };
            let change = cost - next_cost;
            q = next;
            cost = next_cost;
            diag.iterations += 1;
            diag.cost_history.push(cost);
            if change < self.opts.tolerance {
                break;
            }
        }
        diag.spatial_residual = self.spatial_residual(&q);
        (q, diag)
    }
}

/// Geometric retargeting: per-frame inverse kinematics on the combined
/// keypoint cost, warm-started from the previous frame, with joint limits
/// enforced after every step.
pub fn geometric_retarget(
    model: &RobotModel,
    x_ref: &KeypointTrajectory,
    opts: &IkOptions,
) -> Result<GeometricRetarget> {
    x_ref.check()?;
    opts.weights.check()?;
    let map = resolve_keypoint_map(model, &x_ref.names, &opts.keypoint_map)?;
    let laplacian = build_laplacian(&model.adjacency, model.m())?;
    let m = model.m();
    let base_weights = opts.weights.keypoint_weights(m)?;
    let kp_weights: Vec<f64> = (0..m)
        .map(|k| if map[k].is_some() { base_weights[k] } else { 0.0 })
        .collect();
    let mut free: Vec<usize> = model.base.free_base_dofs().to_vec();
    free.extend(6..model.nv());

    let targets_at = |t: usize| -> Vec<Vector3<f64>> {
        (0..m)
            .map(|k| {
                map[k]
                    .map(|s| x_ref.frames[t].positions[s])
                    .unwrap_or_else(Vector3::zeros)
            })
            .collect()
    };

    let mut q = match &opts.initial {
        Some(q) => {
            if q.joints.len() != model.nq() {
                return Err(Error::mismatch(
                    "initial configuration joints",
                    model.nq(),
                    q.joints.len(),
                ));
            }
            q.clone()
        }
        None => {
            let mut q = stance_configuration(model);
            let targets = targets_at(0);
            let kp = keypoint_positions(model, &q);
            let (mut shift, mut wsum) = (Vector3::zeros(), 0.0);
            for k in 0..m {
                if kp_weights[k] > 0.0 {
                    shift += (targets[k] - kp.positions[k]) * kp_weights[k];
                    wsum += kp_weights[k];
                }
            }
            if wsum > 0.0 && model.base != crate::model::BaseJoint::Fixed {
                shift /= wsum;
                q.base_position.x += shift.x;
                if model.base == crate::model::BaseJoint::Floating {
                    q.base_position.y += shift.y;
                }
            }
            q
        }
    };

    let mut configurations = Vec::with_capacity(x_ref.len());
    let mut frames = Vec::with_capacity(x_ref.len());
    for t in 0..x_ref.len() {
        let problem = FrameProblem {
            model,
            laplacian: &laplacian,
            opts,
            targets: targets_at(t),
            kp_weights: kp_weights.clone(),
            free: free.clone(),
        };
        let (next, diag) = problem.solve(q);
        configurations.push(next.clone());
        frames.push(diag);
        q = next;
    }
    Ok(GeometricRetarget {
        trajectory: ConfigurationTrajectory {
            configurations,
            dt: x_ref.dt,
        },
        frames,
    })
}
