//! Robot description: kinematic tree, inertias, limits, keypoints and
//! contact sites.
//!
//! Models are loaded from a JSON document (see `docs/model_format.md`).
//! Link 0 is always the base; every other link hangs off a single revolute
//! joint whose index is `link - 1`.

use nalgebra::{DVector, Matrix3, SymmetricEigen, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the base link is attached to the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaseJoint {
    /// Six-DOF free-floating base.
    #[default]
    Floating,
    /// Base restricted to the world x–z plane: x, z translation and pitch.
    Planar,
    /// Base welded to the world.
    Fixed,
}

impl BaseJoint {
    /// Indices of the generalized-velocity base coordinates that are free.
    ///
    /// Generalized velocity layout: `[v_world (3), omega_body (3), qdot]`.
    pub fn free_base_dofs(self) -> &'static [usize] {
        match self {
            BaseJoint::Floating => &[0, 1, 2, 3, 4, 5],
            BaseJoint::Planar => &[0, 2, 4],
            BaseJoint::Fixed => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub torque: f64,
}

/// Single-DOF revolute joint connecting a link to its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Unit rotation axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Joint frame origin expressed in the parent link frame.
    pub origin_translation: Vector3<f64>,
    /// Joint frame orientation relative to the parent link frame.
    pub origin_rotation: UnitQuaternion<f64>,
    pub limits: JointLimits,
    /// Default PD gains used in target-tracking mode.
    pub kp: f64,
    pub kd: f64,
    /// Joint angle of the default standing posture.
    pub stance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    /// `None` only for the base link.
    pub joint: Option<Joint>,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link axes.
    pub inertia: Matrix3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    pub name: String,
    pub link: usize,
    pub offset: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactPoint {
    pub name: String,
    pub link: usize,
    pub offset: Vector3<f64>,
    pub group: String,
}

/// Immutable robot description shared by every algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub base: BaseJoint,
    pub gravity: Vector3<f64>,
    pub friction: f64,
    pub links: Vec<Link>,
    pub keypoints: Vec<Keypoint>,
    pub adjacency: Vec<(usize, usize)>,
    pub contacts: Vec<ContactPoint>,
}

impl RobotModel {
    /// Number of actuated joints.
    pub fn nq(&self) -> usize {
        self.links.len().saturating_sub(1)
    }

    /// Generalized velocity dimension, `6 + n_q`.
    pub fn nv(&self) -> usize {
        6 + self.nq()
    }

    /// Number of keypoints.
    pub fn m(&self) -> usize {
        self.keypoints.len()
    }

    pub fn joint(&self, j: usize) -> &Joint {
        self.links[j + 1].joint.as_ref().expect("non-base link carries a joint")
    }

    pub fn joints(&self) -> impl Iterator<Item = &Joint> {
        self.links.iter().skip(1).filter_map(|l| l.joint.as_ref())
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Total weight in newtons.
    pub fn weight(&self) -> f64 {
        self.total_mass() * self.gravity.norm()
    }

    pub fn torque_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.nq(), self.joints().map(|j| j.limits.torque))
    }

    pub fn stance_joints(&self) -> DVector<f64> {
        DVector::from_iterator(self.nq(), self.joints().map(|j| j.stance))
    }

    pub fn keypoint_index(&self, name: &str) -> Option<usize> {
        self.keypoints.iter().position(|k| k.name == name)
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Contact group labels in first-appearance order.
    pub fn contact_groups(&self) -> Vec<String> {
        let mut groups: Vec<String> = Vec::new();
        for c in &self.contacts {
            if !groups.contains(&c.group) {
                groups.push(c.group.clone());
            }
        }
        groups
    }

    /// Contact point indices belonging to each group, in `contact_groups` order.
    pub fn contact_group_members(&self) -> Vec<Vec<usize>> {
        self.contact_groups()
            .iter()
            .map(|g| {
                self.contacts
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| &c.group == g)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }

    /// Chain of link indices from the base to `link`, inclusive, root first.
    pub fn chain(&self, link: usize) -> Vec<usize> {
        let mut chain = vec![link];
        let mut cur = link;
        while let Some(p) = self.links[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    /// Serializes to the canonical document form.
    pub fn to_document(&self) -> ModelDocument {
        let name_of = |i: usize| self.links[i].name.clone();
        ModelDocument {
            name: self.name.clone(),
            base: self.base,
            gravity: self.gravity.into(),
            friction: self.friction,
            links: self
                .links
                .iter()
                .map(|l| LinkDoc {
                    name: l.name.clone(),
                    parent: l.parent.map(|p| LinkRef::Name(name_of(p))),
                    mass: l.mass,
                    com: l.com.into(),
                    inertia: matrix_rows(&l.inertia),
                })
                .collect(),
            joints: self
                .links
                .iter()
                .filter_map(|l| l.joint.as_ref().map(|j| (l, j)))
                .map(|(l, j)| {
                    let q = j.origin_rotation.quaternion();
                    JointDoc {
                        name: j.name.clone(),
                        child: LinkRef::Name(l.name.clone()),
                        axis: j.axis.into(),
                        origin: OriginDoc {
                            xyz: j.origin_translation.into(),
                            quat: [q.w, q.i, q.j, q.k],
                        },
                        lower: j.limits.lower,
                        upper: j.limits.upper,
                        velocity: j.limits.velocity,
                        torque: j.limits.torque,
                        kp: Some(j.kp),
                        kd: Some(j.kd),
                        stance: Some(j.stance),
                    }
                })
                .collect(),
            keypoints: self
                .keypoints
                .iter()
                .map(|k| KeypointDoc {
                    name: k.name.clone(),
                    link: LinkRef::Name(name_of(k.link)),
                    offset: k.offset.into(),
                })
                .collect(),
            adjacency: self
                .adjacency
                .iter()
                .map(|&(a, b)| {
                    [
                        LinkRef::Name(self.keypoints[a].name.clone()),
                        LinkRef::Name(self.keypoints[b].name.clone()),
                    ]
                })
                .collect(),
            contacts: self
                .contacts
                .iter()
                .map(|c| ContactDoc {
                    name: c.name.clone(),
                    link: LinkRef::Name(name_of(c.link)),
                    offset: c.offset.into(),
                    group: c.group.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }
}

fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

// ---------------------------------------------------------------------------
// Document schema
// ---------------------------------------------------------------------------

/// Reference to a link or keypoint, by name or by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinkRef {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    #[serde(default)]
    pub base: BaseJoint,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    pub friction: f64,
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub keypoints: Vec<KeypointDoc>,
    #[serde(default)]
    pub adjacency: Vec<[LinkRef; 2]>,
    #[serde(default)]
    pub contacts: Vec<ContactDoc>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub name: String,
    pub parent: Option<LinkRef>,
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia: [[f64; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginDoc {
    pub xyz: [f64; 3],
    /// `[w, x, y, z]`.
    #[serde(default = "identity_quat")]
    pub quat: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub name: String,
    pub child: LinkRef,
    pub axis: [f64; 3],
    pub origin: OriginDoc,
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub torque: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointDoc {
    pub name: String,
    pub link: LinkRef,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactDoc {
    pub name: String,
    pub link: LinkRef,
    pub offset: [f64; 3],
    pub group: String,
}

const DEFAULT_KP: f64 = 100.0;
const DEFAULT_KD: f64 = 2.0;

fn invariant(rule: &'static str, message: impl Into<String>) -> Error {
    Error::ModelInvariant {
        rule,
        message: message.into(),
    }
}

fn resolve(r: &LinkRef, names: &[String], what: &str) -> Result<usize> {
    match r {
        LinkRef::Index(i) => Ok(*i),
        LinkRef::Name(n) => names
            .iter()
            .position(|x| x == n)
            .ok_or_else(|| invariant("invalid index", format!("unknown {what} `{n}`"))),
    }
}

impl ModelDocument {
    /// Converts the document into a model. Structural problems that make
    /// the model unrepresentable are errors; everything else is left to
    /// [`validate_model`].
    pub fn into_model(self) -> Result<RobotModel> {
        let link_names: Vec<String> = self.links.iter().map(|l| l.name.clone()).collect();
        let mut links = Vec::with_capacity(self.links.len());
        for (i, l) in self.links.iter().enumerate() {
            let parent = match &l.parent {
                None => None,
                Some(r) => {
                    // A forward reference by name resolves to a larger index,
                    // which the tree check below rejects.
                    Some(resolve(r, &link_names, "parent link")?)
                }
            };
            if i == 0 && parent.is_some() {
                return Err(invariant(
                    "tree structure",
                    format!("link 0 `{}` must be the base (no parent)", l.name),
                ));
            }
            if i > 0 {
                match parent {
                    None => {
                        return Err(invariant(
                            "tree structure",
                            format!("link {i} `{}` has no parent; only link 0 may be the base", l.name),
                        ))
                    }
                    Some(p) if p >= i => {
                        return Err(invariant(
                            "tree structure",
                            format!("link {i} `{}` has parent index {p} >= own index", l.name),
                        ))
                    }
                    _ => {}
                }
            }
            links.push(Link {
                name: l.name.clone(),
                parent,
                joint: None,
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia: Matrix3::from_fn(|r, c| l.inertia[r][c]),
            });
        }

        for j in &self.joints {
            let child = resolve(&j.child, &link_names, "joint child link")?;
            if child == 0 || child >= links.len() {
                return Err(invariant(
                    "invalid index",
                    format!("joint `{}` child index {child} is not a non-base link", j.name),
                ));
            }
            if links[child].joint.is_some() {
                return Err(invariant(
                    "tree structure",
                    format!("link `{}` has more than one joint", links[child].name),
                ));
            }
            let axis = Vector3::from(j.axis);
            let n = axis.norm();
            if !(n > 1e-12) || !n.is_finite() {
                return Err(invariant("joint axis", format!("joint `{}` has a zero axis", j.name)));
            }
            let [w, x, y, z] = j.origin.quat;
            let quat = nalgebra::Quaternion::new(w, x, y, z);
            if !(quat.norm() > 1e-12) {
                return Err(invariant(
                    "quaternion",
                    format!("joint `{}` origin quaternion is zero", j.name),
                ));
            }
            links[child].joint = Some(Joint {
                name: j.name.clone(),
                axis: axis / n,
                origin_translation: Vector3::from(j.origin.xyz),
                origin_rotation: UnitQuaternion::from_quaternion(quat),
                limits: JointLimits {
                    lower: j.lower,
                    upper: j.upper,
                    velocity: j.velocity,
                    torque: j.torque,
                },
                kp: j.kp.unwrap_or(DEFAULT_KP),
                kd: j.kd.unwrap_or(DEFAULT_KD),
                stance: j
                    .stance
                    .unwrap_or(0.0_f64.clamp(j.lower.min(j.upper), j.upper.max(j.lower))),
            });
        }
        for (i, l) in links.iter().enumerate().skip(1) {
            if l.joint.is_none() {
                return Err(invariant(
                    "tree structure",
                    format!("link {i} `{}` has no joint", l.name),
                ));
            }
        }

        let keypoint_names: Vec<String> = self.keypoints.iter().map(|k| k.name.clone()).collect();
        let keypoints = self
            .keypoints
            .iter()
            .map(|k| {
                Ok(Keypoint {
                    name: k.name.clone(),
                    link: resolve(&k.link, &link_names, "keypoint link")?,
                    offset: Vector3::from(k.offset),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let adjacency = self
            .adjacency
            .iter()
            .map(|[a, b]| {
                Ok((
                    resolve(a, &keypoint_names, "adjacency keypoint")?,
                    resolve(b, &keypoint_names, "adjacency keypoint")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let contacts = self
            .contacts
            .iter()
            .map(|c| {
                Ok(ContactPoint {
                    name: c.name.clone(),
                    link: resolve(&c.link, &link_names, "contact link")?,
                    offset: Vector3::from(c.offset),
                    group: c.group.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(RobotModel {
            name: self.name,
            base: self.base,
            gravity: Vector3::from(self.gravity),
            friction: self.friction,
            links,
            keypoints,
            adjacency,
            contacts,
        })
    }
}

/// Parses and validates a model document.
pub fn load_model(text: &str) -> Result<RobotModel> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::ModelParse(e.to_string()))?;
    let model = doc.into_model()?;
    let report = validate_model(&model);
    if let Some(v) = report.violations.into_iter().next() {
        return Err(Error::ModelInvariant {
            rule: v.rule,
            message: v.message,
        });
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: &'static str, message: String) {
        self.violations.push(Violation { rule, message });
    }
}

/// Lists every violated model invariant. Never fails.
pub fn validate_model(model: &RobotModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n_links = model.links.len();

    if n_links == 0 {
        report.push("tree structure", "model has no links".into());
        return report;
    }
    if !(model.friction > 0.0) || !model.friction.is_finite() {
        report.push("friction positive", format!("friction {} must be > 0", model.friction));
    }
    if !model.gravity.iter().all(|g| g.is_finite()) {
        report.push("gravity finite", "gravity has non-finite entries".into());
    }

    for (i, l) in model.links.iter().enumerate() {
        match (i, l.parent) {
            (0, Some(_)) => report.push("tree structure", "link 0 must be the floating base".into()),
            (0, None) => {}
            (_, None) => report.push("tree structure", format!("link {i} `{}` has no parent", l.name)),
            (_, Some(p)) if p >= i => report.push(
                "tree structure",
                format!("link {i} `{}` has parent index {p} >= own index", l.name),
            ),
            _ => {}
        }
        if !(l.mass > 0.0) || !l.mass.is_finite() {
            report.push(
                "mass positive",
                format!("link `{}` mass {} must be > 0", l.name, l.mass),
            );
        }
        let asym = (l.inertia - l.inertia.transpose()).amax();
        if asym > 1e-12 || !l.inertia.iter().all(|x| x.is_finite()) {
            report.push(
                "inertia symmetric",
                format!("link `{}` inertia is not symmetric", l.name),
            );
        } else {
            let eig = SymmetricEigen::new(l.inertia).eigenvalues;
            if eig.iter().any(|&e| e <= 0.0) {
                report.push("inertia not SPD", format!("link `{}` inertia is not SPD", l.name));
            }
        }
        if i > 0 {
            if let Some(j) = &l.joint {
                let lim = &j.limits;
                if !(lim.lower < lim.upper) {
                    report.push(
                        "joint limits ordered",
                        format!("joint `{}` lower {} >= upper {}", j.name, lim.lower, lim.upper),
                    );
                }
                if !(lim.velocity > 0.0) {
                    report.push(
                        "velocity limit positive",
                        format!("joint `{}` velocity limit must be > 0", j.name),
                    );
                }
                if !(lim.torque > 0.0) {
                    report.push(
                        "torque limit positive",
                        format!("joint `{}` torque limit must be > 0", j.name),
                    );
                }
                if (j.axis.norm() - 1.0).abs() > 1e-9 {
                    report.push("joint axis", format!("joint `{}` axis is not unit length", j.name));
                }
            } else {
                report.push("tree structure", format!("link `{}` has no joint", l.name));
            }
        }
    }

    for k in &model.keypoints {
        if k.link >= n_links {
            report.push(
                "invalid index",
                format!("keypoint `{}` link index {} out of range", k.name, k.link),
            );
        }
    }
    for c in &model.contacts {
        if c.link >= n_links {
            report.push(
                "invalid index",
                format!("contact `{}` link index {} out of range", c.name, c.link),
            );
        }
    }
    let m = model.keypoints.len();
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &model.adjacency {
        if a >= m || b >= m {
            report.push("invalid index", format!("adjacency edge ({a}, {b}) out of range"));
            continue;
        }
        if a == b {
            report.push("self-loop", format!("adjacency edge ({a}, {b}) is a self-loop"));
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.contains(&key) {
            report.push("duplicate edge", format!("adjacency edge ({a}, {b}) is duplicated"));
        } else {
            seen.push(key);
        }
    }
    report
}
