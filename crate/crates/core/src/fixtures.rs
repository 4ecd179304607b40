//! Synthetic reference motions with known ground truth.
//!
//! Keypoints come from a "performer" that shares the mini-humanoid's
//! topology but has 6% longer segments, so the reference is never exactly
//! reachable by the robot. Truth contact labels and configurations come from
//! the authored motion itself.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::feasibility::{estimate_contacts, ContactSequence, DEFAULT_CONTACT_THRESHOLD};
use crate::kinematics::{fk_trajectory, place_on_ground, Configuration, ConfigurationTrajectory, KeypointTrajectory};
use crate::model::RobotModel;
use crate::reference;
use crate::{Error, Result};

pub const PERFORMER_SCALE: f64 = 1.06;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    /// Vertical pelvis oscillation with both feet planted.
    Squat,
    /// Squat plus a 10 cm lateral drift and frame-wise jitter.
    Drift,
    /// Left foot raised while standing on the right.
    OneFoot,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 3] = [FixtureKind::Squat, FixtureKind::Drift, FixtureKind::OneFoot];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::Squat => "squat",
            FixtureKind::Drift => "drift",
            FixtureKind::OneFoot => "one-foot",
        }
    }

    pub fn parse(s: &str) -> Result<FixtureKind> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture `{s}` (squat, drift, one-foot)")))
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub kind: FixtureKind,
    /// Reference keypoints, named and ordered like the robot's keypoints.
    pub keypoints: KeypointTrajectory,
    /// Contact labels of the authored motion.
    pub truth_contacts: ContactSequence,
    /// Authored performer configurations (before drift and jitter).
    pub truth: ConfigurationTrajectory,
}

/// The mini-humanoid with every length scaled by `scale`.
pub fn performer_model(scale: f64) -> RobotModel {
    let mut m = reference::mini_humanoid();
    m.name = "performer".into();
    for l in &mut m.links {
        l.com *= scale;
        if let Some(j) = l.joint.as_mut() {
            j.origin_translation *= scale;
        }
    }
    for k in &mut m.keypoints {
        k.offset *= scale;
    }
    for c in &mut m.contacts {
        c.offset *= scale;
    }
    m
}

/// Smooth 0 → 1 → 0 bump over one period.
fn bump(t: f64, period: f64) -> f64 {
    0.5 * (1.0 - (2.0 * std::f64::consts::PI * t / period).cos())
}

fn joint(model: &RobotModel, name: &str) -> usize {
    model
        .joints()
        .position(|j| j.name == name)
        .unwrap_or_else(|| panic!("performer joint `{name}`"))
}

fn authored_motion(model: &RobotModel, kind: FixtureKind, frames: usize, dt: f64) -> ConfigurationTrajectory {
    let stance = model.stance_joints();
    let period = 1.6;
    let configurations = (0..frames)
        .map(|i| {
            let t = i as f64 * dt;
            let mut q = Configuration::new(Vector3::zeros(), nalgebra::UnitQuaternion::identity(), stance.clone());
            let a = bump(t, period);
            let mut flex = |side: &str, depth: f64| {
                q.joints[joint(model, &format!("{side}_hip_pitch"))] -= depth;
                q.joints[joint(model, &format!("{side}_knee"))] += 2.0 * depth;
                q.joints[joint(model, &format!("{side}_ankle_pitch"))] -= depth;
            };
            match kind {
                FixtureKind::Squat | FixtureKind::Drift => {
                    flex("l", 0.35 * a);
                    flex("r", 0.35 * a);
                }
                FixtureKind::OneFoot => {
                    flex("r", 0.1 * a);
                    flex("l", 0.1 * a + 0.45 * a * a);
                }
            }
            let swing = 0.3 * a;
            q.joints[joint(model, "l_shoulder_pitch")] -= swing;
            q.joints[joint(model, "r_shoulder_pitch")] -= swing;
            if kind == FixtureKind::OneFoot {
                // Raise the left foot: keep the right sole on the ground.
                place_on_ground_by(model, &mut q, "right_foot");
            } else {
                place_on_ground(model, &mut q);
            }
            q
        })
        .collect();
    ConfigurationTrajectory { configurations, dt }
}

fn place_on_ground_by(model: &RobotModel, q: &mut Configuration, group: &str) {
    let pts = crate::kinematics::contact_positions(model, q);
    let lowest = model
        .contacts
        .iter()
        .zip(&pts)
        .filter(|(c, _)| c.group == group)
        .map(|(_, p)| p.z)
        .fold(f64::INFINITY, f64::min);
    q.base_position.z -= lowest;
}

/// Builds a fixture of `frames` frames at `dt`.
pub fn build(kind: FixtureKind, frames: usize, dt: f64) -> Result<Fixture> {
    if frames < 3 {
        return Err(Error::InvalidArgument(format!(
            "fixtures need at least 3 frames, got {frames}"
        )));
    }
    let performer = performer_model(PERFORMER_SCALE);
    let truth = authored_motion(&performer, kind, frames, dt);
    let truth_contacts = estimate_contacts(&performer, &truth, DEFAULT_CONTACT_THRESHOLD)?;
    let mut keypoints = fk_trajectory(&performer, &truth);
    if kind == FixtureKind::Drift {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d21f);
        let n = frames as f64 - 1.0;
        for (t, f) in keypoints.frames.iter_mut().enumerate() {
            let drift = Vector3::new(0.0, 0.10 * t as f64 / n, 0.0);
            for p in &mut f.positions {
                let jitter = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ) * 0.01;
                *p += drift + jitter;
            }
        }
    }
    Ok(Fixture {
        kind,
        keypoints,
        truth_contacts,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::contact_positions;

    #[test]
    fn squat_keeps_feet_planted() {
        let f = build(FixtureKind::Squat, 80, 0.02).unwrap();
        assert!(f.truth_contacts.flags.iter().all(|r| r.iter().all(|&c| c)));
        let performer = performer_model(PERFORMER_SCALE);
        let z: Vec<f64> = f.truth.configurations.iter().map(|q| q.base_position.z).collect();
        let depth = z.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(z[0] - depth > 0.05, "squat depth {}", z[0] - depth);
        for q in &f.truth.configurations {
            let pts = contact_positions(&performer, q);
            for p in &pts {
                assert!(p.z.abs() < 1e-9, "sole height {}", p.z);
            }
        }
    }

    #[test]
    fn one_foot_lifts_left_only() {
        let f = build(FixtureKind::OneFoot, 80, 0.02).unwrap();
        let left = f.truth_contacts.groups.iter().position(|g| g == "left_foot").unwrap();
        let right = 1 - left;
        assert!(f.truth_contacts.flags.iter().all(|r| r[right]));
        let lifted = f.truth_contacts.flags.iter().filter(|r| !r[left]).count();
        assert!(lifted > 10 && lifted < 60, "{lifted}");
    }

    #[test]
    fn drift_moves_reference_sideways() {
        let squat = build(FixtureKind::Squat, 50, 0.02).unwrap();
        let drift = build(FixtureKind::Drift, 50, 0.02).unwrap();
        let k = 0;
        let dy = drift.keypoints.frames[49].positions[k].y - squat.keypoints.frames[49].positions[k].y;
        assert!((dy - 0.10).abs() <= 0.01 + 1e-12);
        assert_eq!(drift.truth_contacts, squat.truth_contacts);
        let again = build(FixtureKind::Drift, 50, 0.02).unwrap();
        assert_eq!(again.keypoints, drift.keypoints);
    }

    #[test]
    fn keypoints_match_robot_layout() {
        let robot = reference::mini_humanoid();
        let f = build(FixtureKind::Squat, 10, 0.02).unwrap();
        let names: Vec<String> = robot.keypoints.iter().map(|k| k.name.clone()).collect();
        assert_eq!(f.keypoints.names, names);
        assert_eq!(f.keypoints.adjacency, robot.adjacency);
        assert!(FixtureKind::parse("nope").is_err());
        assert_eq!(FixtureKind::parse("one-foot").unwrap(), FixtureKind::OneFoot);
    }
}
