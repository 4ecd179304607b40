//! Physical feasibility of a configuration trajectory, checked with rigid
//! contacts and a bounded least-squares QP per timestep. Deliberately shares
//! nothing with the compliant contact model of the simulator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{finite_difference_derivatives, inverse_dynamics};
use crate::kinematics::{contact_positions, link_frames, point_jacobian, Configuration, ConfigurationTrajectory};
use crate::model::RobotModel;
use crate::qp::{solve_qp, QpProblem, QpSettings, QpStatus};
use crate::{Error, Result};

pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.02;

/// Per-frame, per-group contact flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSequence {
    pub groups: Vec<String>,
    pub dt: f64,
    /// `flags[t][g]`.
    pub flags: Vec<Vec<bool>>,
}

impl ContactSequence {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        for (t, row) in self.flags.iter().enumerate() {
            if row.len() != self.groups.len() {
                return Err(Error::mismatch("contact flags per frame", self.groups.len(), row.len())
                    .with_context(format!("frame {t}")));
            }
        }
        Ok(())
    }

    /// Contact point indices of every group flagged at frame `t`.
    pub fn active_points(&self, model: &RobotModel, t: usize) -> Vec<usize> {
        model
            .contacts
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                self.groups
                    .iter()
                    .position(|g| *g == c.group)
                    .is_some_and(|g| self.flags[t][g])
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Flags a group in contact when its lowest point is below `threshold`.
pub fn estimate_contacts(model: &RobotModel, q: &ConfigurationTrajectory, threshold: f64) -> Result<ContactSequence> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "contact threshold {threshold} must be > 0"
        )));
    }
    let groups = model.contact_groups();
    let members = model.contact_group_members();
    let flags = q
        .configurations
        .iter()
        .map(|qt| {
            let pts = contact_positions(model, qt);
            members
                .iter()
                .map(|m| m.iter().map(|&i| pts[i].z).fold(f64::INFINITY, f64::min) < threshold)
                .collect()
        })
        .collect();
    Ok(ContactSequence {
        groups,
        dt: q.dt,
        flags,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTolerances {
    /// Admissible norm of unexplained generalized force; `None` means 1% of
    /// the model's weight.
    pub residual: Option<f64>,
    /// Overrides the model friction coefficient.
    pub friction: Option<f64>,
    pub qp: QpSettings,
}

impl FeasibilityTolerances {
    pub fn epsilon(&self, model: &RobotModel) -> f64 {
        self.residual.unwrap_or(0.01 * model.weight())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Feasible,
    Infeasible,
    /// The QP did not converge; counted as infeasible.
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub status: VerdictStatus,
    pub feasible: bool,
    /// Norm of the unexplained generalized force at the best (τ, λ).
    pub residual: f64,
    /// `min_j (τ_max,j − |τ_j|)`.
    pub torque_margin: f64,
    /// `min_c (μ' λ_n − max |λ_t|)` over active points, if any.
    pub cone_margin: Option<f64>,
    pub torques: Vec<f64>,
    pub contact_forces: Vec<[f64; 3]>,
    pub qp_iterations: usize,
}

/// Friction coefficient of the inscribed four-sided pyramid.
pub fn pyramid_coefficient(mu: f64) -> f64 {
    mu / std::f64::consts::SQRT_2
}

/// Does some admissible (τ, λ) reproduce the accelerations `a`?
pub fn check_timestep_feasibility(
    model: &RobotModel,
    q: &Configuration,
    v: &DVector<f64>,
    a: &DVector<f64>,
    contacts: &[usize],
    tol: &FeasibilityTolerances,
) -> Result<FeasibilityVerdict> {
    let nq = model.nq();
    let target = inverse_dynamics(model, q, v, a, &[])?;
    let frames = link_frames(model, q);
    let rows: Vec<usize> = model
        .base
        .free_base_dofs()
        .iter()
        .copied()
        .chain(6..model.nv())
        .collect();
    let nc = contacts.len();
    let nz = nq + 3 * nc;
    let mut amat = DMatrix::zeros(rows.len(), nz);
    let b = DVector::from_fn(rows.len(), |r, _| target[rows[r]]);
    for (r, &row) in rows.iter().enumerate() {
        if row >= 6 {
            amat[(r, row - 6)] = 1.0;
        }
    }
    for (k, &ci) in contacts.iter().enumerate() {
        let c = model.contacts.get(ci).ok_or(Error::IndexOutOfRange {
            context: "contact point",
            index: ci,
            len: model.contacts.len(),
        })?;
        let jac = point_jacobian(model, &frames, c.link, &c.offset);
        for (r, &row) in rows.iter().enumerate() {
            for d in 0..3 {
                amat[(r, nq + 3 * k + d)] = jac[(d, row)];
            }
        }
    }
    let mu = pyramid_coefficient(tol.friction.unwrap_or(model.friction));
    let limits = model.torque_limits();
    // Bounds: torque box, then per contact λ_n ≥ 0 and λ_x, λ_y within ±μ'λ_n.
    let m = nq + 5 * nc;
    let mut c = DMatrix::zeros(m, nz);
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    for j in 0..nq {
        c[(j, j)] = 1.0;
        l[j] = -limits[j];
        u[j] = limits[j];
    }
    for k in 0..nc {
        let base = nq + 5 * k;
        let (ix, iy, iz) = (nq + 3 * k, nq + 3 * k + 1, nq + 3 * k + 2);
        c[(base, iz)] = 1.0;
        l[base] = 0.0;
        u[base] = f64::INFINITY;
        for (r, (idx, sign)) in [(ix, 1.0), (ix, -1.0), (iy, 1.0), (iy, -1.0)].into_iter().enumerate() {
            c[(base + 1 + r, idx)] = sign;
            c[(base + 1 + r, iz)] = -mu;
            l[base + 1 + r] = f64::NEG_INFINITY;
            u[base + 1 + r] = 0.0;
        }
    }
    let mut p = amat.transpose() * &amat;
    let reg = 1e-12 * (1.0 + p.diagonal().amax());
    for i in 0..nz {
        p[(i, i)] += reg;
    }
    let problem = QpProblem {
        p,
        q: -(amat.transpose() * &b),
        c,
        l,
        u,
    };
    let sol = solve_qp(&problem, &tol.qp)?;
    let z = &sol.x;
    let residual = (&amat * z - &b).norm();
    let eps = tol.epsilon(model);
    let torques: Vec<f64> = (0..nq).map(|j| z[j]).collect();
    let contact_forces: Vec<[f64; 3]> = (0..nc)
        .map(|k| [z[nq + 3 * k], z[nq + 3 * k + 1], z[nq + 3 * k + 2]])
        .collect();
    let torque_margin = (0..nq).map(|j| limits[j] - z[j].abs()).fold(f64::INFINITY, f64::min);
    let cone_margin = contact_forces
        .iter()
        .map(|f| mu * f[2] - f[0].abs().max(f[1].abs()))
        .reduce(f64::min);
    let status = match sol.status {
        QpStatus::Solved if residual <= eps => VerdictStatus::Feasible,
        QpStatus::Solved => VerdictStatus::Infeasible,
        _ => VerdictStatus::Indeterminate,
    };
    Ok(FeasibilityVerdict {
        status,
        feasible: status == VerdictStatus::Feasible,
        residual,
        torque_margin,
        cone_margin,
        torques,
        contact_forces,
        qp_iterations: sol.iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub verdicts: Vec<FeasibilityVerdict>,
    pub contacts: ContactSequence,
    pub infeasible_fraction: f64,
    pub indeterminate: usize,
    pub worst_residual: f64,
    pub worst_timestep: usize,
    pub epsilon: f64,
}

pub fn check_trajectory_feasibility(
    model: &RobotModel,
    q: &ConfigurationTrajectory,
    contact_threshold: f64,
    tol: &FeasibilityTolerances,
) -> Result<FeasibilityReport> {
    let (vel, acc) = finite_difference_derivatives(&q.configurations, q.dt)?;
    let contacts = estimate_contacts(model, q, contact_threshold)?;
    let verdicts = (0..q.configurations.len())
        .into_par_iter()
        .map(|t| {
            let active = contacts.active_points(model, t);
            check_timestep_feasibility(model, &q.configurations[t], &vel[t], &acc[t], &active, tol)
                .map_err(|e| e.with_context(format!("feasibility at frame {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let infeasible = verdicts.iter().filter(|v| !v.feasible).count();
    let (worst_timestep, worst_residual) = verdicts
        .iter()
        .enumerate()
        .map(|(t, v)| (t, v.residual))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(FeasibilityReport {
        infeasible_fraction: infeasible as f64 / verdicts.len() as f64,
        indeterminate: verdicts
            .iter()
            .filter(|v| v.status == VerdictStatus::Indeterminate)
            .count(),
        worst_residual,
        worst_timestep,
        epsilon: tol.epsilon(model),
        verdicts,
        contacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rollout, ControlSequence, DynamicsConfig};
    use crate::kinematics::stance_configuration;
    use crate::reference;
    use proptest::prelude::*;

    fn pendulum_verdict(theta: f64, acc: f64, tau_max: f64) -> FeasibilityVerdict {
        let model = reference::fixed_pendulum(1.0, 1.0, tau_max);
        let mut q = Configuration::zero(&model);
        q.joints[0] = theta;
        let mut a = DVector::zeros(model.nv());
        a[6] = acc;
        check_timestep_feasibility(&model, &q, &DVector::zeros(model.nv()), &a, &[], &Default::default()).unwrap()
    }

    #[test]
    fn pendulum_examples() {
        let v = pendulum_verdict(std::f64::consts::FRAC_PI_2, 0.0, 5.0);
        assert!(!v.feasible);
        assert!((v.residual - 4.81).abs() < 1e-6, "{}", v.residual);
        let v = pendulum_verdict(std::f64::consts::FRAC_PI_2, -9.81, 5.0);
        assert!(v.feasible);
        assert!(v.torques[0].abs() < 1e-3);
    }

    #[test]
    fn resting_box_forces_balance_weight() {
        let model = reference::free_box(4.0, [0.2, 0.1, 0.05]);
        let mut q = Configuration::zero(&model);
        q.base_position.z = 0.05;
        let nv = model.nv();
        let v = check_timestep_feasibility(
            &model,
            &q,
            &DVector::zeros(nv),
            &DVector::zeros(nv),
            &[0, 1, 2, 3],
            &Default::default(),
        )
        .unwrap();
        assert!(v.feasible);
        let total: f64 = v.contact_forces.iter().map(|f| f[2]).sum();
        assert!((total - 4.0 * 9.81).abs() < 1e-6, "{total}");
    }

    #[test]
    fn contact_rule_threshold() {
        let model = reference::free_box(1.0, [0.1, 0.1, 0.1]);
        let traj = |z: f64| {
            let mut q = Configuration::zero(&model);
            q.base_position.z = 0.1 + z;
            ConfigurationTrajectory {
                configurations: vec![q],
                dt: 0.02,
            }
        };
        assert!(estimate_contacts(&model, &traj(0.019), 0.02).unwrap().flags[0][0]);
        assert!(!estimate_contacts(&model, &traj(0.021), 0.02).unwrap().flags[0][0]);
        assert!(!estimate_contacts(&model, &traj(1.0), 0.02).unwrap().flags[0][0]);
        assert!(estimate_contacts(&model, &traj(1.0), 0.0).is_err());
    }

    fn hold(q: &Configuration, n: usize) -> ConfigurationTrajectory {
        ConfigurationTrajectory {
            configurations: vec![q.clone(); n],
            dt: 0.02,
        }
    }

    #[test]
    fn static_stance_is_feasible() {
        let model = reference::mini_humanoid();
        let q = stance_configuration(&model);
        let report = check_trajectory_feasibility(&model, &hold(&q, 10), 0.02, &Default::default()).unwrap();
        assert_eq!(report.infeasible_fraction, 0.0);
        assert!(report.contacts.flags.iter().all(|f| f.iter().all(|&x| x)));
    }

    #[test]
    fn teleport_is_infeasible() {
        let model = reference::mini_humanoid();
        let q = stance_configuration(&model);
        let mut traj = hold(&q, 10);
        for c in &mut traj.configurations[5..] {
            c.base_position.z += 0.5;
        }
        let report = check_trajectory_feasibility(&model, &traj, 0.02, &Default::default()).unwrap();
        // The jump spans frames 4..=5 (velocity) and their accelerations.
        for t in 4..=5 {
            assert!(!report.verdicts[t].feasible, "frame {t}");
        }
        assert!(report.verdicts[..4].iter().all(|v| v.feasible));
    }

    #[test]
    fn simulated_stance_is_feasible() {
        let model = reference::mini_humanoid();
        let q0 = stance_configuration(&model);
        let stance = model.stance_joints();
        let controls = DMatrix::from_fn(60, model.nq(), |t, j| {
            stance[j] + if j % 4 == 2 { 0.1 * (t as f64 * 0.15).sin() } else { 0.0 }
        });
        let traj = rollout(
            &model,
            &q0,
            &ControlSequence { controls, dt: 0.02 },
            &DynamicsConfig::default(),
        )
        .unwrap();
        let report = check_trajectory_feasibility(&model, &traj.executed(), 0.02, &Default::default()).unwrap();
        assert!(report.infeasible_fraction <= 0.05, "{}", report.infeasible_fraction);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn raising_threshold_keeps_contacts(z in 0.0f64..0.2, t1 in 0.001f64..0.1, dt in 0.0f64..0.1) {
            let model = reference::free_box(1.0, [0.1, 0.1, 0.1]);
            let mut q = Configuration::zero(&model);
            q.base_position.z = 0.1 + z;
            let traj = hold(&q, 1);
            let low = estimate_contacts(&model, &traj, t1).unwrap();
            let high = estimate_contacts(&model, &traj, t1 + dt).unwrap();
            prop_assert!(!low.flags[0][0] || high.flags[0][0]);
        }

        #[test]
        fn more_torque_never_hurts(theta in -1.5f64..1.5, acc in -20.0f64..20.0, cap in 0.5f64..10.0, extra in 0.0f64..10.0) {
            let a = pendulum_verdict(theta, acc, cap);
            let b = pendulum_verdict(theta, acc, cap + extra);
            prop_assert!(!a.feasible || b.feasible);
            prop_assert!(b.residual <= a.residual + 1e-6);
            let eps = FeasibilityTolerances::default().epsilon(&reference::fixed_pendulum(1.0, 1.0, cap));
            prop_assert_eq!(a.feasible, a.residual <= eps);
        }
    }
}
