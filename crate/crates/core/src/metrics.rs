//! Evaluation metrics: contact accuracy, success, tracking errors, foot
//! slip, RL tracking-reward terms and seed aggregation.

use nalgebra::{DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::cost::{build_laplacian, laplacian_blocks, LaplacianMatrix};
use crate::feasibility::{check_trajectory_feasibility, ContactSequence, FeasibilityReport, FeasibilityTolerances};
use crate::kinematics::{contact_positions, fk_trajectory, ConfigurationTrajectory, KeypointTrajectory};
use crate::model::RobotModel;
use crate::{Error, Result};

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.5;

/// Fraction of (frame, group) flags that differ.
pub fn contact_error_rate(estimated: &ContactSequence, truth: &ContactSequence) -> Result<f64> {
    estimated.check()?;
    truth.check()?;
    if estimated.len() != truth.len() {
        return Err(Error::mismatch("contact sequence frames", truth.len(), estimated.len()));
    }
    if estimated.groups != truth.groups {
        return Err(Error::InvalidArgument(format!(
            "contact groups differ: {:?} vs {:?}",
            estimated.groups, truth.groups
        )));
    }
    let total = estimated.len() * estimated.groups.len();
    if total == 0 {
        return Ok(0.0);
    }
    let differing: usize = estimated
        .flags
        .iter()
        .zip(&truth.flags)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
        .sum();
    Ok(differing as f64 / total as f64)
}

/// Largest per-frame distance between two pelvis traces.
pub fn max_pelvis_deviation(pelvis: &[Vector3<f64>], pelvis_ref: &[Vector3<f64>]) -> Result<f64> {
    if pelvis.len() != pelvis_ref.len() {
        return Err(Error::mismatch("pelvis trace length", pelvis_ref.len(), pelvis.len()));
    }
    Ok(pelvis
        .iter()
        .zip(pelvis_ref)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// A trial fails once the pelvis strays more than `threshold` from the
/// reference at any frame.
pub fn success(pelvis: &[Vector3<f64>], pelvis_ref: &[Vector3<f64>], threshold: f64) -> Result<bool> {
    Ok(max_pelvis_deviation(pelvis, pelvis_ref)? <= threshold)
}

/// Position of keypoint `name` in every frame.
pub fn keypoint_trace(x: &KeypointTrajectory, name: &str) -> Result<Vec<Vector3<f64>>> {
    let k = x
        .names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("no keypoint named `{name}`")))?;
    Ok(x.frames.iter().map(|f| f.positions[k]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrors {
    /// Needs a reference configuration trajectory.
    pub joints_rmse: Option<f64>,
    pub mean_position_error: f64,
    pub mean_laplacian_error: f64,
}

/// Joint RMSE plus keypoint position and Laplacian errors, each averaged
/// jointly over all (frame, keypoint) pairs.
pub fn tracking_errors(
    q: Option<(&ConfigurationTrajectory, &ConfigurationTrajectory)>,
    x: &KeypointTrajectory,
    x_ref: &KeypointTrajectory,
    l: &LaplacianMatrix,
) -> Result<TrackingErrors> {
    if x.len() != x_ref.len() {
        return Err(Error::mismatch("keypoint frames", x_ref.len(), x.len()));
    }
    if x.m() != x_ref.m() || l.m() != x.m() {
        return Err(Error::mismatch("keypoint count", x_ref.m(), x.m()));
    }
    let joints_rmse = match q {
        None => None,
        Some((a, b)) => {
            if a.len() != b.len() {
                return Err(Error::mismatch("configuration frames", b.len(), a.len()));
            }
            let mut sum = 0.0;
            let mut count = 0usize;
            for (qa, qb) in a.configurations.iter().zip(&b.configurations) {
                if qa.joints.len() != qb.joints.len() {
                    return Err(Error::mismatch("joint count", qb.joints.len(), qa.joints.len()));
                }
                sum += (&qa.joints - &qb.joints).norm_squared();
                count += qa.joints.len();
            }
            Some(if count == 0 { 0.0 } else { (sum / count as f64).sqrt() })
        }
    };
    let pairs = (x.len() * x.m()).max(1) as f64;
    let mut pos = 0.0;
    let mut lap = 0.0;
    for (a, b) in x.frames.iter().zip(&x_ref.frames) {
        pos += a
            .positions
            .iter()
            .zip(&b.positions)
            .map(|(p, r)| (p - r).norm())
            .sum::<f64>();
        lap += laplacian_blocks(a, b, l).iter().map(|v| v.norm()).sum::<f64>();
    }
    Ok(TrackingErrors {
        joints_rmse,
        mean_position_error: pos / pairs,
        mean_laplacian_error: lap / pairs,
    })
}

/// Horizontal travel of each contact group's mean point, summed over
/// consecutive frames both flagged in contact.
pub fn foot_slip(model: &RobotModel, q: &ConfigurationTrajectory, contacts: &ContactSequence) -> Result<f64> {
    contacts.check()?;
    if contacts.len() != q.len() {
        return Err(Error::mismatch("contact sequence frames", q.len(), contacts.len()));
    }
    let groups = model.contact_groups();
    if contacts.groups != groups {
        return Err(Error::InvalidArgument(format!(
            "contact groups {:?} do not match the model's {:?}",
            contacts.groups, groups
        )));
    }
    let members = model.contact_group_members();
    let centers: Vec<Vec<Vector3<f64>>> = q
        .configurations
        .iter()
        .map(|qt| {
            let pts = contact_positions(model, qt);
            members
                .iter()
                .map(|m| m.iter().map(|&i| pts[i]).sum::<Vector3<f64>>() / m.len() as f64)
                .collect()
        })
        .collect();
    let mut slip = 0.0;
    for t in 1..q.len() {
        for g in 0..groups.len() {
            if contacts.flags[t - 1][g] && contacts.flags[t][g] {
                slip += (centers[t][g] - centers[t - 1][g]).xy().norm();
            }
        }
    }
    Ok(slip)
}

/// Weights and scales of the tracking reward. A tracking row reads
/// `weight · exp(−error / scale²)`, a penalty row `−weight · quantity`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub joint_position: (f64, f64),
    pub joint_velocity: (f64, f64),
    pub root_pose: (f64, f64),
    pub root_velocity: (f64, f64),
    pub end_effector: (f64, f64),
    /// Multiplier of the squared orientation angle inside the root pose row.
    pub root_angle_factor: f64,
    /// Multiplier of the squared angular velocity error inside the root velocity row.
    pub root_angular_factor: f64,
    pub joint_acceleration: f64,
    pub joint_torque: f64,
    pub action_rate: f64,
    pub joint_velocity_penalty: f64,
    pub foot_slip: f64,
    /// Contact force above which a foot counts as loaded, N.
    pub contact_force_threshold: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            joint_position: (0.5, 2.0),
            joint_velocity: (0.1, 10.0),
            root_pose: (0.15, 0.45),
            root_velocity: (0.1, 1.0),
            end_effector: (0.15, 0.32),
            root_angle_factor: 0.1,
            root_angular_factor: 0.1,
            joint_acceleration: 1e-7,
            joint_torque: 1e-7,
            action_rate: 0.1,
            joint_velocity_penalty: 0.005,
            foot_slip: 0.2,
            contact_force_threshold: 5.0,
        }
    }
}

/// Quantities one reward evaluation reads from the robot or the reference.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardState {
    pub joint_positions: DVector<f64>,
    pub joint_velocities: DVector<f64>,
    pub joint_accelerations: DVector<f64>,
    pub joint_torques: DVector<f64>,
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub base_linear_velocity: Vector3<f64>,
    pub base_angular_velocity: Vector3<f64>,
    pub end_effectors: Vec<Vector3<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootSample {
    pub velocity: Vector3<f64>,
    pub contact_force: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub joint_position: f64,
    pub joint_velocity: f64,
    pub root_pose: f64,
    pub root_velocity: f64,
    pub end_effector: f64,
    pub joint_acceleration: f64,
    pub joint_torque: f64,
    pub action_rate: f64,
    pub joint_velocity_penalty: f64,
    pub foot_slip: f64,
    pub total: f64,
}

fn tracking(row: (f64, f64), err: f64) -> f64 {
    row.0 * (-err / (row.1 * row.1)).exp()
}

fn same_len(a: &DVector<f64>, b: &DVector<f64>, what: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::mismatch(what, b.len(), a.len()));
    }
    Ok(())
}

pub fn reward_terms(
    state: &RewardState,
    reference: &RewardState,
    action: &DVector<f64>,
    prev_action: &DVector<f64>,
    feet: &[FootSample],
    w: &RewardWeights,
) -> Result<RewardBreakdown> {
    same_len(&state.joint_positions, &reference.joint_positions, "joint positions")?;
    same_len(&state.joint_velocities, &reference.joint_velocities, "joint velocities")?;
    same_len(action, prev_action, "action")?;
    if state.end_effectors.len() != reference.end_effectors.len() {
        return Err(Error::mismatch(
            "end effectors",
            reference.end_effectors.len(),
            state.end_effectors.len(),
        ));
    }
    let dq = (&state.joint_positions - &reference.joint_positions).norm_squared();
    let dqd = (&state.joint_velocities - &reference.joint_velocities).norm_squared();
    let angle = state.base_orientation.angle_to(&reference.base_orientation);
    let pose = (state.base_position - reference.base_position).norm_squared() + w.root_angle_factor * angle * angle;
    let vel = (state.base_linear_velocity - reference.base_linear_velocity).norm_squared()
        + w.root_angular_factor * (state.base_angular_velocity - reference.base_angular_velocity).norm_squared();
    let ee: f64 = state
        .end_effectors
        .iter()
        .zip(&reference.end_effectors)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let slip: f64 = feet
        .iter()
        .filter(|f| f.contact_force > w.contact_force_threshold)
        .map(|f| f.velocity.xy().norm())
        .sum();
    let mut r = RewardBreakdown {
        joint_position: tracking(w.joint_position, dq),
        joint_velocity: tracking(w.joint_velocity, dqd),
        root_pose: tracking(w.root_pose, pose),
        root_velocity: tracking(w.root_velocity, vel),
        end_effector: tracking(w.end_effector, ee),
        joint_acceleration: -w.joint_acceleration * state.joint_accelerations.norm_squared(),
        joint_torque: -w.joint_torque * state.joint_torques.norm_squared(),
        action_rate: -w.action_rate * (action - prev_action).norm_squared(),
        joint_velocity_penalty: -w.joint_velocity_penalty * state.joint_velocities.norm_squared(),
        foot_slip: -w.foot_slip * slip,
        total: 0.0,
    };
    r.total = r.joint_position
        + r.joint_velocity
        + r.root_pose
        + r.root_velocity
        + r.end_effector
        + r.joint_acceleration
        + r.joint_torque
        + r.action_rate
        + r.joint_velocity_penalty
        + r.foot_slip;
    Ok(r)
}

/// Metrics of one retargeted trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Needs ground-truth contact labels.
    pub contact_error_rate: Option<f64>,
    pub success: bool,
    pub max_pelvis_deviation: f64,
    pub joints_rmse: Option<f64>,
    pub mean_position_error: f64,
    pub mean_laplacian_error: f64,
    pub foot_slip: f64,
    pub infeasible_fraction: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seeds: usize,
    pub success_rate: f64,
    pub contact_error_rate: Option<MeanStd>,
    pub max_pelvis_deviation: MeanStd,
    pub joints_rmse: Option<MeanStd>,
    pub mean_position_error: MeanStd,
    pub mean_laplacian_error: MeanStd,
    pub foot_slip: MeanStd,
    pub infeasible_fraction: Option<MeanStd>,
}

fn optional(reports: &[MetricsReport], f: impl Fn(&MetricsReport) -> Option<f64>) -> Option<MeanStd> {
    reports
        .iter()
        .map(f)
        .collect::<Option<Vec<f64>>>()
        .map(|v| MeanStd::of(&v))
}

/// Mean and population std of every field; optional fields are aggregated
/// only when present in every report.
pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate zero reports".into()));
    }
    let field = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        seeds: reports.len(),
        success_rate: reports.iter().filter(|r| r.success).count() as f64 / reports.len() as f64,
        contact_error_rate: optional(reports, |r| r.contact_error_rate),
        max_pelvis_deviation: field(|r| r.max_pelvis_deviation),
        joints_rmse: optional(reports, |r| r.joints_rmse),
        mean_position_error: field(|r| r.mean_position_error),
        mean_laplacian_error: field(|r| r.mean_laplacian_error),
        foot_slip: field(|r| r.foot_slip),
        infeasible_fraction: optional(reports, |r| r.infeasible_fraction),
    })
}

/// Everything measured on one retargeted trajectory.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub feasibility: FeasibilityReport,
    /// Keypoints of the retargeted motion.
    pub keypoints: KeypointTrajectory,
}

/// Scores `q` against the reference keypoints. The pelvis trace is the
/// keypoint named `pelvis` (keypoint 0 if there is none). Truth contacts and
/// reference configurations are optional.
pub fn evaluate_trajectory(
    model: &RobotModel,
    q: &ConfigurationTrajectory,
    x_ref: &KeypointTrajectory,
    truth: Option<&ContactSequence>,
    q_ref: Option<&ConfigurationTrajectory>,
    contact_threshold: f64,
    tol: &FeasibilityTolerances,
) -> Result<Evaluation> {
    let x = fk_trajectory(model, q);
    let l = build_laplacian(&model.adjacency, model.m())?;
    let feasibility = check_trajectory_feasibility(model, q, contact_threshold, tol)?;
    let tracking = tracking_errors(q_ref.map(|r| (q, r)), &x, x_ref, &l)?;
    let k = model.keypoint_index("pelvis").unwrap_or(0);
    let pelvis: Vec<Vector3<f64>> = x.frames.iter().map(|f| f.positions[k]).collect();
    let k_ref = x_ref.names.iter().position(|n| n == "pelvis").unwrap_or(k);
    let pelvis_ref: Vec<Vector3<f64>> = x_ref.frames.iter().map(|f| f.positions[k_ref]).collect();
    let deviation = max_pelvis_deviation(&pelvis, &pelvis_ref)?;
    let metrics = MetricsReport {
        contact_error_rate: truth
            .map(|t| contact_error_rate(&feasibility.contacts, t))
            .transpose()?,
        success: deviation <= DEFAULT_SUCCESS_THRESHOLD,
        max_pelvis_deviation: deviation,
        joints_rmse: tracking.joints_rmse,
        mean_position_error: tracking.mean_position_error,
        mean_laplacian_error: tracking.mean_laplacian_error,
        foot_slip: foot_slip(model, q, &feasibility.contacts)?,
        infeasible_fraction: Some(feasibility.infeasible_fraction),
    };
    Ok(Evaluation {
        metrics,
        feasibility,
        keypoints: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::build_laplacian;
    use crate::kinematics::{stance_configuration, Configuration, KeypointSet};
    use crate::reference;
    use proptest::prelude::*;

    fn seq(flags: Vec<Vec<bool>>) -> ContactSequence {
        ContactSequence {
            groups: vec!["left_foot".into(), "right_foot".into()],
            dt: 0.02,
            flags,
        }
    }

    #[test]
    fn contact_error_examples() {
        let a = seq(vec![vec![true, false]; 10]);
        assert_eq!(contact_error_rate(&a, &a).unwrap(), 0.0);
        let c = seq(vec![vec![false, true]; 10]);
        assert_eq!(contact_error_rate(&a, &c).unwrap(), 1.0);
        let mut one = a.clone();
        one.flags[3][1] = true;
        assert_eq!(contact_error_rate(&a, &one).unwrap(), 0.05);
        assert!(contact_error_rate(&a, &seq(vec![vec![true, false]; 9])).is_err());
    }

    #[test]
    fn success_rule() {
        let r = vec![Vector3::zeros(); 5];
        let mut p = r.clone();
        p[2].x = 0.51;
        assert!(!success(&p, &r, 0.5).unwrap());
        let p = vec![Vector3::new(0.0, 0.49, 0.0); 5];
        assert!(success(&p, &r, 0.5).unwrap());
        assert!(success(&r, &r, 0.5).unwrap());
        assert!(success(&r[..4], &r, 0.5).is_err());
    }

    fn kp_traj(frames: Vec<Vec<Vector3<f64>>>) -> KeypointTrajectory {
        let m = frames[0].len();
        KeypointTrajectory {
            names: (0..m).map(|i| format!("k{i}")).collect(),
            frames: frames.into_iter().map(|positions| KeypointSet { positions }).collect(),
            dt: 0.02,
            adjacency: (1..m).map(|i| (i - 1, i)).collect(),
        }
    }

    #[test]
    fn tracking_error_examples() {
        let model = reference::planar_biped();
        let base = Configuration::zero(&model);
        let q_ref = ConfigurationTrajectory {
            configurations: vec![base.clone(); 6],
            dt: 0.02,
        };
        let mut q = q_ref.clone();
        for c in &mut q.configurations {
            c.joints[1] += 0.2;
        }
        let pts: Vec<Vector3<f64>> = (0..8).map(|i| Vector3::new(i as f64, 0.0, 1.0)).collect();
        let x_ref = kp_traj(vec![pts.clone(); 6]);
        let mut shifted = pts.clone();
        shifted[3].z += 0.3;
        let x = kp_traj(vec![shifted; 6]);
        let l = build_laplacian(&x.adjacency, 8).unwrap();
        let e = tracking_errors(Some((&q, &q_ref)), &x, &x_ref, &l).unwrap();
        assert!((e.joints_rmse.unwrap() - 0.1).abs() < 1e-15);
        assert!((e.mean_position_error - 0.0375).abs() < 1e-15);
        let zero = tracking_errors(Some((&q_ref, &q_ref)), &x_ref, &x_ref, &l).unwrap();
        assert_eq!(
            zero,
            TrackingErrors {
                joints_rmse: Some(0.0),
                mean_position_error: 0.0,
                mean_laplacian_error: 0.0
            }
        );
    }

    #[test]
    fn foot_slip_examples() {
        let model = reference::mini_humanoid();
        let q0 = stance_configuration(&model);
        let n = 11;
        let still = ConfigurationTrajectory {
            configurations: vec![q0.clone(); n],
            dt: 0.02,
        };
        let planted = seq(vec![vec![true, true]; n]);
        assert_eq!(foot_slip(&model, &still, &planted).unwrap(), 0.0);
        // Whole robot translates 0.1 m along x: each foot slides 0.1.
        let mut moving = still.clone();
        for (t, c) in moving.configurations.iter_mut().enumerate() {
            c.base_position.x += 0.01 * t as f64;
        }
        let left_only = seq(vec![vec![true, false]; n]);
        assert!((foot_slip(&model, &moving, &left_only).unwrap() - 0.1).abs() < 1e-12);
        let airborne = seq(vec![vec![false, false]; n]);
        assert_eq!(foot_slip(&model, &moving, &airborne).unwrap(), 0.0);
    }

    fn perfect_state() -> RewardState {
        RewardState {
            joint_positions: DVector::from_element(4, 0.3),
            joint_velocities: DVector::zeros(4),
            joint_accelerations: DVector::zeros(4),
            joint_torques: DVector::zeros(4),
            base_position: Vector3::new(0.0, 0.0, 0.7),
            base_orientation: UnitQuaternion::identity(),
            base_linear_velocity: Vector3::zeros(),
            base_angular_velocity: Vector3::zeros(),
            end_effectors: vec![Vector3::new(0.2, 0.1, 0.0)],
        }
    }

    #[test]
    fn perfect_tracking_reward() {
        let s = perfect_state();
        let a = DVector::zeros(4);
        let r = reward_terms(&s, &s, &a, &a, &[], &RewardWeights::default()).unwrap();
        assert_eq!(
            (
                r.joint_position,
                r.joint_velocity,
                r.root_pose,
                r.root_velocity,
                r.end_effector
            ),
            (0.5, 0.1, 0.15, 0.1, 0.15)
        );
        assert_eq!(r.action_rate, 0.0);
        assert!((r.total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reward_closed_forms() {
        let reference = perfect_state();
        let mut s = perfect_state();
        s.joint_positions[0] += 2.0;
        let a = DVector::zeros(4);
        let mut a1 = a.clone();
        a1[2] = 1.0;
        let feet = [
            FootSample {
                velocity: Vector3::new(0.3, 0.4, 1.0),
                contact_force: 20.0,
            },
            FootSample {
                velocity: Vector3::new(1.0, 0.0, 0.0),
                contact_force: 4.0,
            },
        ];
        let r = reward_terms(&s, &reference, &a1, &a, &feet, &RewardWeights::default()).unwrap();
        assert!((r.joint_position - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((r.action_rate + 0.1).abs() < 1e-12);
        assert!((r.foot_slip + 0.2 * 0.5).abs() < 1e-12);
        assert!((r.joint_velocity_penalty).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let report = |v: f64, ok: bool| MetricsReport {
            contact_error_rate: Some(v),
            success: ok,
            max_pelvis_deviation: v,
            joints_rmse: None,
            mean_position_error: v,
            mean_laplacian_error: v,
            foot_slip: v,
            infeasible_fraction: None,
        };
        let one = aggregate_seeds(&[report(0.3, true)]).unwrap();
        assert_eq!(one.mean_position_error, MeanStd { mean: 0.3, std: 0.0 });
        let three = aggregate_seeds(&[report(1.0, true), report(2.0, true), report(3.0, false)]).unwrap();
        assert_eq!(three.foot_slip.mean, 2.0);
        assert!((three.foot_slip.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(three.joints_rmse.is_none());
        let rates: Vec<MetricsReport> = [true, true, false, false, false]
            .iter()
            .map(|&s| report(0.0, s))
            .collect();
        assert_eq!(aggregate_seeds(&rates).unwrap().success_rate, 0.4);
        assert!(aggregate_seeds(&[]).is_err());
    }

    proptest! {
        #[test]
        fn contact_error_symmetric_and_bounded(bits in proptest::collection::vec(any::<(bool, bool, bool, bool)>(), 1..20)) {
            let a = seq(bits.iter().map(|b| vec![b.0, b.1]).collect());
            let b = seq(bits.iter().map(|b| vec![b.2, b.3]).collect());
            let ab = contact_error_rate(&a, &b).unwrap();
            prop_assert_eq!(ab, contact_error_rate(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn tracking_rows_bounded_and_monotone(e1 in 0.0f64..5.0, de in 0.0f64..5.0) {
            let row = (0.5, 2.0);
            let a = tracking(row, e1);
            let b = tracking(row, e1 + de);
            prop_assert!(a > 0.0 && a <= 0.5);
            prop_assert!(b <= a);
        }
    }
}
