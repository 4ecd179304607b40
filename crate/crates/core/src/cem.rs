//! Cross-entropy method over spline-parameterized controls and the
//! receding-horizon MPC built on it (indirect and direct dynamic
//! retargeting).

use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{build_laplacian, frame_laplacian, frame_spatial, CostWeights, LaplacianMatrix};
use crate::dynamics::{rollout_from, ControlMode, ControlSequence, DynamicsConfig, State, Trajectory};
use crate::kinematics::{
    fk_trajectory, geometric_retarget, keypoint_positions, place_on_ground, stance_configuration, Configuration,
    ConfigurationTrajectory, GeometricRetarget, IkOptions, KeypointTrajectory,
};
use crate::model::RobotModel;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Initial sampling std per control channel; `None` picks 0.3 rad for
    /// PD targets and 2.0 N·m for torques.
    pub init_std: Option<f64>,
    pub std_floor: f64,
    /// Weight of the elite statistics in the refit (1 = full replacement).
    pub smoothing: f64,
    /// Controls per spline knot.
    pub knot_spacing: usize,
    /// Horizon in control steps.
    pub horizon: usize,
    /// Controls executed per replan.
    pub stride: usize,
    pub seed: u64,
    /// Evaluate the current mean as sample 0 of every iteration.
    pub include_mean: bool,
    /// Weight of `Σ ‖u‖²` added to the horizon cost.
    pub effort_weight: f64,
    /// Which knots the MPC executes after each replan.
    pub execute: ExecutePolicy,
    /// Start each replan from the previous (shifted) sampling std instead
    /// of the initial one. The newly exposed tail knot always restarts at
    /// the initial std.
    pub carry_std: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutePolicy {
    /// The refit sampling mean.
    #[default]
    Mean,
    /// The lowest-cost sample seen.
    Best,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 128,
            elites: 16,
            iterations: 4,
            init_std: None,
            std_floor: 0.05,
            smoothing: 1.0,
            knot_spacing: 5,
            horizon: 25,
            stride: 2,
            seed: 0,
            include_mean: true,
            effort_weight: 1e-4,
            execute: ExecutePolicy::Mean,
            carry_std: true,
        }
    }
}

impl CemConfig {
    /// Small population and short horizon for tests and quick looks.
    pub fn fast() -> Self {
        Self {
            population: 48,
            elites: 8,
            iterations: 3,
            knot_spacing: 5,
            horizon: 10,
            stride: 2,
            ..Self::default()
        }
    }

    pub fn thorough() -> Self {
        Self {
            population: 256,
            elites: 24,
            iterations: 6,
            stride: 1,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("CEM config: {m}")));
        if !(1 <= self.elites && self.elites < self.population) {
            return bad("need 1 <= elites < population");
        }
        if !(self.stride >= 1 && self.horizon >= self.stride) {
            return bad("need horizon >= stride >= 1");
        }
        if self.knot_spacing == 0 || self.iterations == 0 {
            return bad("knot spacing and iterations must be >= 1");
        }
        if !(self.std_floor > 0.0) || self.init_std.is_some_and(|s| !(s > 0.0)) {
            return bad("stds must be > 0");
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return bad("smoothing must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn initial_std(&self, mode: &ControlMode) -> f64 {
        self.init_std.unwrap_or(match mode {
            ControlMode::PdTarget => 0.3,
            ControlMode::Torque => 2.0,
        })
    }
}

pub fn knot_count(horizon: usize, spacing: usize) -> usize {
    horizon.div_ceil(spacing) + 1
}

/// Piecewise-linear interpolation: knot `j` sits at control index `j·s`.
pub fn spline_to_controls(knots: &DMatrix<f64>, horizon: usize, spacing: usize) -> Result<DMatrix<f64>> {
    if spacing == 0 {
        return Err(Error::InvalidArgument("knot spacing must be >= 1".into()));
    }
    let k = knot_count(horizon, spacing);
    if knots.nrows() != k {
        return Err(Error::mismatch("spline knots", k, knots.nrows()));
    }
    let n = knots.ncols();
    let mut out = DMatrix::zeros(horizon, n);
    for i in 0..horizon {
        let seg = i / spacing;
        let frac = (i % spacing) as f64 / spacing as f64;
        for c in 0..n {
            out[(i, c)] = if frac == 0.0 {
                knots[(seg, c)]
            } else {
                knots[(seg, c)] * (1.0 - frac) + knots[(seg + 1, c)] * frac
            };
        }
    }
    Ok(out)
}

/// Value of the knot spline at a (fractional) control index; holds the last
/// knot beyond the end.
fn spline_at(knots: &DMatrix<f64>, spacing: usize, t: f64) -> nalgebra::RowDVector<f64> {
    let last = knots.nrows() - 1;
    let x = t / spacing as f64;
    let seg = x.floor() as usize;
    if seg >= last {
        return knots.row(last).clone_owned();
    }
    let f = x - seg as f64;
    knots.row(seg) * (1.0 - f) + knots.row(seg + 1) * f
}

/// Warm start: the spline delayed by `shift` controls, re-sampled at the knots.
pub fn shift_knots(knots: &DMatrix<f64>, spacing: usize, shift: usize) -> DMatrix<f64> {
    let mut out = knots.clone();
    for j in 0..knots.nrows() {
        out.set_row(j, &spline_at(knots, spacing, (j * spacing + shift) as f64));
    }
    out
}

/// Independent RNG stream for one CEM sample.
pub fn sample_rng(seed: u64, replan: u64, iteration: u64, sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replan);
    rng.set_word_pos(((iteration << 32) | sample) as u128 * 1024);
    rng
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    pub best_so_far: f64,
    pub population_best: f64,
    pub elite_mean_cost: f64,
    pub std_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemOutcome {
    pub best: DMatrix<f64>,
    pub best_cost: f64,
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
    pub iterations: Vec<CemIteration>,
    pub evaluations: usize,
}

/// Sampling optimizers the MPC can drive.
pub trait StochasticOptimizer: Sync {
    fn optimize(
        &self,
        objective: &(dyn Fn(&DMatrix<f64>) -> f64 + Sync),
        init_mean: &DMatrix<f64>,
        init_std: &DMatrix<f64>,
        replan: u64,
    ) -> Result<CemOutcome>;
}

impl StochasticOptimizer for CemConfig {
    fn optimize(
        &self,
        objective: &(dyn Fn(&DMatrix<f64>) -> f64 + Sync),
        init_mean: &DMatrix<f64>,
        init_std: &DMatrix<f64>,
        replan: u64,
    ) -> Result<CemOutcome> {
        cem_optimize(objective, init_mean, init_std, self, replan)
    }
}

/// Minimizes `objective` over matrices shaped like `init_mean`. Non-finite
/// costs count as `+∞`; the result is independent of the rayon pool size.
pub fn cem_optimize(
    objective: &(dyn Fn(&DMatrix<f64>) -> f64 + Sync),
    init_mean: &DMatrix<f64>,
    init_std: &DMatrix<f64>,
    cfg: &CemConfig,
    replan: u64,
) -> Result<CemOutcome> {
    cfg.check()?;
    if init_std.shape() != init_mean.shape() {
        return Err(Error::mismatch("CEM std shape", init_mean.len(), init_std.len()));
    }
    if init_std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("CEM initial std must be > 0".into()));
    }
    let (rows, cols) = init_mean.shape();
    let mut mean = init_mean.clone();
    let mut std = init_std.clone();
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut evaluations = 0;
    for it in 0..cfg.iterations {
        let (m_ref, s_ref) = (&mean, &std);
        let population: Vec<(DMatrix<f64>, f64)> = (0..cfg.population)
            .into_par_iter()
            .map(|i| {
                let x = if i == 0 && cfg.include_mean {
                    m_ref.clone()
                } else {
                    let mut rng = sample_rng(cfg.seed, replan, it as u64, i as u64);
                    DMatrix::from_fn(rows, cols, |r, c| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m_ref[(r, c)] + s_ref[(r, c)] * z
                    })
                };
                let cost = objective(&x);
                (x, if cost.is_finite() { cost } else { f64::INFINITY })
            })
            .collect();
        evaluations += population.len();
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| population[a].1.total_cmp(&population[b].1).then(a.cmp(&b)));
        let elites = &order[..cfg.elites];
        if population[elites[0]].1 == f64::INFINITY && best.is_none() {
            return Err(Error::ObjectiveInvalid);
        }
        let top = &population[elites[0]];
        if best.as_ref().is_none_or(|b| top.1 < b.1) {
            best = Some((top.0.clone(), top.1));
        }
        let finite: Vec<usize> = elites
            .iter()
            .copied()
            .filter(|&i| population[i].1.is_finite())
            .collect();
        let ne = finite.len() as f64;
        let mut e_mean = DMatrix::zeros(rows, cols);
        for &i in &finite {
            e_mean += &population[i].0;
        }
        e_mean /= ne;
        let mut e_var = DMatrix::zeros(rows, cols);
        for &i in &finite {
            let d = &population[i].0 - &e_mean;
            e_var += d.component_mul(&d);
        }
        e_var /= ne;
        let a = cfg.smoothing;
        mean = &e_mean * a + &mean * (1.0 - a);
        std = e_var.map(f64::sqrt) * a + &std * (1.0 - a);
        std.apply(|s| *s = s.max(cfg.std_floor));
        iterations.push(CemIteration {
            best_so_far: best.as_ref().map_or(f64::INFINITY, |b| b.1),
            population_best: top.1,
            elite_mean_cost: finite.iter().map(|&i| population[i].1).sum::<f64>() / ne,
            std_norm: std.norm(),
        });
    }
    let (best, best_cost) = best.expect("at least one iteration ran");
    Ok(CemOutcome {
        best,
        best_cost,
        mean,
        std,
        iterations,
        evaluations,
    })
}

// ---------------------------------------------------------------------------
// Receding-horizon MPC
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetargetMode {
    /// Track the geometric retarget's keypoints (IDR).
    Indirect,
    /// Track the reference keypoints directly (DDR).
    Direct,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub step: usize,
    pub best_cost: f64,
    pub iterations: Vec<CemIteration>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub replans: Vec<ReplanRecord>,
    pub total_rollouts: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct Plan {
    /// `T + 1` states, the initial one first.
    pub trajectory: Trajectory,
    pub controls: ControlSequence,
    pub diagnostics: PlanDiagnostics,
}

impl Plan {
    /// States reached after each control, aligned with the target frames.
    pub fn executed(&self) -> ConfigurationTrajectory {
        self.trajectory.executed()
    }
}

fn clip_controls(model: &RobotModel, mode: &ControlMode, u: &mut DMatrix<f64>) {
    for (j, joint) in model.joints().enumerate() {
        let (lo, hi) = match mode {
            ControlMode::PdTarget => (joint.limits.lower, joint.limits.upper),
            ControlMode::Torque => (-joint.limits.torque, joint.limits.torque),
        };
        for v in u.column_mut(j).iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
}

struct HorizonCost<'a> {
    model: &'a RobotModel,
    laplacian: &'a LaplacianMatrix,
    weights: &'a CostWeights,
    keypoint_weights: Vec<f64>,
    dynamics: &'a DynamicsConfig,
    cem: &'a CemConfig,
    dt: f64,
}

impl HorizonCost<'_> {
    fn controls(&self, knots: &DMatrix<f64>) -> DMatrix<f64> {
        let mut u = spline_to_controls(knots, self.cem.horizon, self.cem.knot_spacing).expect("knot count");
        clip_controls(self.model, &self.dynamics.mode, &mut u);
        u
    }

    fn evaluate(&self, state: &State, window: &KeypointTrajectory, knots: &DMatrix<f64>) -> f64 {
        let u = self.controls(knots);
        let effort = u.norm_squared();
        let seq = ControlSequence {
            controls: u,
            dt: self.dt,
        };
        let traj = match rollout_from(self.model, state, &seq, self.dynamics) {
            Ok(t) => t,
            Err(_) => return f64::INFINITY,
        };
        let (mut ep, mut el) = (0.0, 0.0);
        for (s, target) in traj.states[1..].iter().zip(&window.frames) {
            let x = keypoint_positions(self.model, &s.q);
            ep += frame_spatial(&x, target, &self.keypoint_weights);
            el += frame_laplacian(&x, target, self.laplacian, &self.keypoint_weights);
        }
        self.weights.w_p * ep + self.weights.w_l * el + self.cem.effort_weight * effort
    }
}

/// Receding-horizon CEM tracking of `target` from `q0` at rest. Window `t`
/// compares the states after controls `t .. t+H` with target frames
/// `t .. t+H`, holding the last frame past the end.
pub fn plan_receding_horizon(
    model: &RobotModel,
    target: &KeypointTrajectory,
    q0: &Configuration,
    laplacian: &LaplacianMatrix,
    weights: &CostWeights,
    cem: &CemConfig,
    dynamics: &DynamicsConfig,
) -> Result<Plan> {
    plan_with(model, target, q0, laplacian, weights, cem, dynamics, cem)
}

/// [`plan_receding_horizon`] with any [`StochasticOptimizer`].
#[allow(clippy::too_many_arguments)]
pub fn plan_with(
    model: &RobotModel,
    target: &KeypointTrajectory,
    q0: &Configuration,
    laplacian: &LaplacianMatrix,
    weights: &CostWeights,
    cem: &CemConfig,
    dynamics: &DynamicsConfig,
    optimizer: &dyn StochasticOptimizer,
) -> Result<Plan> {
    let started = Instant::now();
    cem.check()?;
    weights.check()?;
    target.check()?;
    if target.m() != model.m() {
        return Err(Error::mismatch("target keypoints", model.m(), target.m()));
    }
    if laplacian.m() != model.m() {
        return Err(Error::mismatch("laplacian size", model.m(), laplacian.m()));
    }
    if (target.dt - dynamics.control_dt).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "target dt {} differs from control dt {}",
            target.dt, dynamics.control_dt
        )));
    }
    if q0.joints.len() != model.nq() || !q0.is_valid() {
        return Err(Error::InvalidArgument("invalid initial configuration".into()));
    }
    let cost = HorizonCost {
        model,
        laplacian,
        weights,
        keypoint_weights: weights.keypoint_weights(model.m())?,
        dynamics,
        cem,
        dt: target.dt,
    };
    let t_total = target.len();
    let k = knot_count(cem.horizon, cem.knot_spacing);
    let nq = model.nq();
    let std0 = DMatrix::from_element(k, nq, cem.initial_std(&dynamics.mode));
    let mut mean = match dynamics.mode {
        ControlMode::PdTarget => DMatrix::from_fn(k, nq, |_, j| q0.joints[j]),
        ControlMode::Torque => DMatrix::zeros(k, nq),
    };
    let mut std_cur = std0.clone();
    let mut states = vec![State::at_rest(q0.clone())];
    let mut executed = DMatrix::zeros(t_total, nq);
    let mut diag = PlanDiagnostics::default();
    let mut t = 0;
    let mut replan = 0u64;
    while t < t_total {
        let state = states.last().expect("initial state").clone();
        let window = target.window(t, cem.horizon);
        let objective = |knots: &DMatrix<f64>| cost.evaluate(&state, &window, knots);
        let outcome = optimizer
            .optimize(&objective, &mean, &std_cur, replan)
            .map_err(|e| e.with_context(format!("replan {replan} at step {t}")))?;
        diag.total_rollouts += outcome.evaluations;
        let n_exec = cem.stride.min(t_total - t);
        let exec_knots = match cem.execute {
            ExecutePolicy::Mean => &outcome.mean,
            ExecutePolicy::Best => &outcome.best,
        };
        let u = cost.controls(exec_knots).rows(0, n_exec).clone_owned();
        let seq = ControlSequence {
            controls: u.clone(),
            dt: target.dt,
        };
        let piece = rollout_from(model, &state, &seq, dynamics).map_err(|e| match e {
            Error::NonFinite { quantity, step } => Error::NonFinite {
                quantity: format!("{quantity} (replan {replan})"),
                step: t + step,
            },
            other => other.with_context(format!("replan {replan} at step {t}")),
        })?;
        states.extend(piece.states.into_iter().skip(1));
        executed.rows_mut(t, n_exec).copy_from(&u);
        diag.replans.push(ReplanRecord {
            step: t,
            best_cost: outcome.best_cost,
            iterations: outcome.iterations,
        });
        mean = shift_knots(&outcome.mean, cem.knot_spacing, n_exec);
        if cem.carry_std {
            std_cur = shift_knots(&outcome.std, cem.knot_spacing, n_exec);
            std_cur.row_mut(k - 1).copy_from(&std0.row(k - 1));
        }
        t += n_exec;
        replan += 1;
    }
    diag.wall_time_s = started.elapsed().as_secs_f64();
    Ok(Plan {
        trajectory: Trajectory { states, dt: target.dt },
        controls: ControlSequence {
            controls: executed,
            dt: target.dt,
        },
        diagnostics: diag,
    })
}

/// Stance configuration standing under the reference pelvis (or the
/// keypoint centroid if there is no pelvis keypoint).
pub fn direct_initial_configuration(model: &RobotModel, x_ref: &KeypointTrajectory) -> Configuration {
    let mut q = stance_configuration(model);
    let first = &x_ref.frames[0];
    let anchor = match x_ref.names.iter().position(|n| n == "pelvis") {
        Some(k) => first.positions[k],
        None => first.positions.iter().sum::<Vector3<f64>>() / first.len().max(1) as f64,
    };
    let pelvis_now = model
        .keypoint_index("pelvis")
        .map(|k| keypoint_positions(model, &q).positions[k])
        .unwrap_or(q.base_position);
    q.base_position.x += anchor.x - pelvis_now.x;
    q.base_position.y += anchor.y - pelvis_now.y;
    q
}

/// First geometric-retarget frame lowered or raised onto the ground.
pub fn indirect_initial_configuration(model: &RobotModel, gr_first: &Configuration) -> Configuration {
    let mut q = gr_first.clone();
    place_on_ground(model, &mut q);
    q
}

#[derive(Clone, Debug)]
pub struct DynamicRetarget {
    pub mode: RetargetMode,
    pub plan: Plan,
    /// Keypoints the MPC tracked.
    pub target: KeypointTrajectory,
    pub q0: Configuration,
    pub geometric: Option<GeometricRetarget>,
}

/// IDR or DDR end to end.
pub fn dynamic_retarget(
    model: &RobotModel,
    x_ref: &KeypointTrajectory,
    mode: RetargetMode,
    ik: &IkOptions,
    cem: &CemConfig,
    dynamics: &DynamicsConfig,
) -> Result<DynamicRetarget> {
    x_ref.check()?;
    let laplacian = build_laplacian(&model.adjacency, model.m())?;
    let (target, q0, geometric) = match mode {
        RetargetMode::Direct => (x_ref.clone(), direct_initial_configuration(model, x_ref), None),
        RetargetMode::Indirect => {
            let gr = geometric_retarget(model, x_ref, ik)?;
            let target = fk_trajectory(model, &gr.trajectory);
            let q0 = indirect_initial_configuration(model, &gr.trajectory.configurations[0]);
            (target, q0, Some(gr))
        }
    };
    let plan = plan_receding_horizon(model, &target, &q0, &laplacian, &ik.weights, cem, dynamics)?;
    Ok(DynamicRetarget {
        mode,
        plan,
        target,
        q0,
        geometric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::ConfigurationTrajectory;
    use crate::reference;

    #[test]
    fn spline_examples() {
        let c = DMatrix::from_element(knot_count(10, 4), 2, 0.7);
        assert!(spline_to_controls(&c, 10, 4).unwrap().iter().all(|&v| v == 0.7));
        let ramp = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let u = spline_to_controls(&ramp, 5, 5).unwrap();
        for i in 0..5 {
            assert!((u[(i, 0)] - i as f64 / 5.0).abs() < 1e-15);
        }
        let id = DMatrix::from_fn(knot_count(6, 1), 3, |r, c| (r * 3 + c) as f64);
        assert_eq!(spline_to_controls(&id, 6, 1).unwrap(), id.rows(0, 6).clone_owned());
        assert!(spline_to_controls(&id, 6, 2).is_err());
    }

    #[test]
    fn shifting_by_whole_knots_drops_the_first() {
        let k = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let s = shift_knots(&k, 3, 3);
        assert_eq!(s.as_slice(), &[2.0, 3.0, 4.0, 4.0]);
        let half = shift_knots(&k, 2, 1);
        assert_eq!(half.as_slice(), &[1.5, 2.5, 3.5, 4.0]);
    }

    fn quadratic(cfg: &CemConfig) -> CemOutcome {
        let obj = |x: &DMatrix<f64>| (x[(0, 0)] - 0.3).powi(2);
        cem_optimize(&obj, &DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.0), cfg, 0).unwrap()
    }

    #[test]
    fn recovers_quadratic_optimum() {
        let cfg = CemConfig {
            population: 64,
            elites: 8,
            iterations: 20,
            std_floor: 1e-6,
            seed: 3,
            ..Default::default()
        };
        let out = quadratic(&cfg);
        assert!((out.best[(0, 0)] - 0.3).abs() < 1e-3);
        assert!(out.iterations.windows(2).all(|w| w[1].best_so_far <= w[0].best_so_far));
        assert!(out.std.iter().all(|&s| s >= 1e-6));
        assert_eq!(quadratic(&cfg).best, out.best);
    }

    #[test]
    fn constant_objective() {
        let cfg = CemConfig {
            include_mean: false,
            ..Default::default()
        };
        let obj = |_: &DMatrix<f64>| 2.5;
        let out = cem_optimize(&obj, &DMatrix::zeros(2, 2), &DMatrix::from_element(2, 2, 0.1), &cfg, 1).unwrap();
        assert_eq!(out.best_cost, 2.5);
        assert!(out.mean.amax() < 0.5);
    }

    #[test]
    fn invalid_objective() {
        let cfg = CemConfig::default();
        let nan = |_: &DMatrix<f64>| f64::NAN;
        assert!(matches!(
            cem_optimize(&nan, &DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.0), &cfg, 0),
            Err(Error::ObjectiveInvalid)
        ));
        // Half the space invalid: the solver keeps going.
        let half = |x: &DMatrix<f64>| if x[(0, 0)] < 0.0 { f64::NAN } else { x[(0, 0)] };
        let out = cem_optimize(&half, &DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.0), &cfg, 0).unwrap();
        assert!(out.best_cost.is_finite() && out.best[(0, 0)] >= 0.0);
    }

    #[test]
    fn pool_size_does_not_matter() {
        let cfg = CemConfig {
            iterations: 5,
            seed: 11,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| quadratic(&cfg))
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = CemConfig {
            elites: 200,
            ..Default::default()
        };
        assert!(cfg.check().is_err());
        cfg.elites = 8;
        cfg.stride = 30;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn holds_a_standing_target() {
        let model = reference::mini_humanoid();
        let q0 = stance_configuration(&model);
        let n = 100;
        let target = fk_trajectory(
            &model,
            &ConfigurationTrajectory {
                configurations: vec![q0.clone(); n],
                dt: 0.02,
            },
        );
        let l = build_laplacian(&model.adjacency, model.m()).unwrap();
        let plan = plan_receding_horizon(
            &model,
            &target,
            &q0,
            &l,
            &CostWeights::default(),
            &CemConfig::fast(),
            &DynamicsConfig::default(),
        )
        .unwrap();
        assert_eq!(plan.executed().len(), n);
        assert_eq!(plan.controls.len(), n);
        let x = fk_trajectory(&model, &plan.executed());
        for (a, b) in x.frames.iter().zip(&target.frames) {
            for (p, r) in a.positions.iter().zip(&b.positions) {
                assert!((p - r).norm() < 0.05, "{}", (p - r).norm());
            }
        }
    }

    #[test]
    fn short_target_runs_one_padded_window() {
        let model = reference::mini_humanoid();
        let q0 = stance_configuration(&model);
        let target = fk_trajectory(
            &model,
            &ConfigurationTrajectory {
                configurations: vec![q0.clone(); 3],
                dt: 0.02,
            },
        );
        let cem = CemConfig {
            stride: 5,
            ..CemConfig::fast()
        };
        let l = build_laplacian(&model.adjacency, model.m()).unwrap();
        let plan = plan_receding_horizon(
            &model,
            &target,
            &q0,
            &l,
            &CostWeights::default(),
            &cem,
            &DynamicsConfig::default(),
        )
        .unwrap();
        assert_eq!(plan.executed().len(), 3);
        assert_eq!(plan.diagnostics.replans.len(), 1);
    }

    #[test]
    fn execute_policies_differ_only_in_executed_knots() {
        let model = reference::mini_humanoid();
        let q0 = stance_configuration(&model);
        let target = fk_trajectory(
            &model,
            &ConfigurationTrajectory {
                configurations: vec![q0.clone(); 6],
                dt: 0.02,
            },
        );
        let l = build_laplacian(&model.adjacency, model.m()).unwrap();
        let plan = |execute, carry_std| {
            let cem = CemConfig {
                execute,
                carry_std,
                ..CemConfig::fast()
            };
            plan_receding_horizon(
                &model,
                &target,
                &q0,
                &l,
                &CostWeights::default(),
                &cem,
                &DynamicsConfig::default(),
            )
            .unwrap()
        };
        let mean = plan(ExecutePolicy::Mean, true);
        let best = plan(ExecutePolicy::Best, true);
        assert_eq!(mean.diagnostics.replans[0], best.diagnostics.replans[0]);
        assert_ne!(mean.controls.controls, best.controls.controls);
        let fresh = plan(ExecutePolicy::Mean, false);
        assert_eq!(fresh.controls.controls.rows(0, 2), mean.controls.controls.rows(0, 2));
        assert_eq!(fresh.executed().len(), 6);
    }
}
