//! End-to-end runs: load inputs, retarget once per seed, score, and write
//! one artifact directory per seed plus a per-method aggregate.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use retarget_core::cem::{dynamic_retarget, PlanDiagnostics, RetargetMode};
use retarget_core::feasibility::{
    check_trajectory_feasibility, ContactSequence, FeasibilityReport, FeasibilityTolerances,
};
use retarget_core::fixtures::{self, FixtureKind};
use retarget_core::kinematics::{
    geometric_retarget, ConfigurationTrajectory, IkFrameDiagnostics, IkOptions, KeypointTrajectory,
};
use retarget_core::metrics::{aggregate_seeds, evaluate_trajectory, AggregateReport, MetricsReport};
use retarget_core::model::{load_model, validate_model, ModelDocument, ValidationReport};
use retarget_core::{reference, RobotModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Method, PipelineConfig};
use crate::formats::{
    contacts_to_string, keypoints_to_string, parse_contacts, parse_keypoints, parse_trajectory, trajectory_to_string,
};
use crate::{read_json, read_text, write_json, write_text, CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const TRAJECTORY: &str = "trajectory.txt";
pub const KEYPOINTS: &str = "keypoints.txt";
pub const CONTACTS: &str = "contacts.txt";
pub const FEASIBILITY: &str = "feasibility.json";
pub const METRICS: &str = "metrics.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const AGGREGATE: &str = "aggregate.json";

/// Identifies one artifact directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub method: Method,
    /// `None` for the deterministic geometric baseline.
    pub seed: Option<u64>,
    pub model: String,
    pub frames: usize,
    pub dt: f64,
    pub config: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub run_id: String,
    pub method: Method,
    pub seed: Option<u64>,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityArtifact {
    pub run_id: String,
    pub method: Method,
    pub seed: Option<u64>,
    pub report: FeasibilityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsArtifact {
    pub run_id: String,
    pub method: Method,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    /// Per-frame IK statistics (GR, and the GR stage of IDR).
    pub ik: Option<Vec<IkFrameDiagnostics>>,
    pub plan: Option<PlanDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateArtifact {
    pub run_id: String,
    pub method: Method,
    pub seeds: Vec<Option<u64>>,
    pub aggregate: AggregateReport,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub dir: PathBuf,
    pub seed: Option<u64>,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub run_id: String,
    pub method: Method,
    /// `<out>/<method>`.
    pub dir: PathBuf,
    pub runs: Vec<SeedRun>,
    pub aggregate: AggregateReport,
}

pub struct Inputs {
    pub model: RobotModel,
    /// Reference keypoints reordered to the model's keypoint order.
    pub reference: KeypointTrajectory,
    pub truth: Option<ContactSequence>,
    pub reference_trajectory: Option<ConfigurationTrajectory>,
}

pub fn load_model_file(path: Option<&Path>) -> CliResult<RobotModel> {
    match path {
        None => Ok(reference::mini_humanoid()),
        Some(p) => {
            let text = read_text(p)?;
            load_model(&text).map_err(|e| CliError::Parse {
                path: p.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })
        }
    }
}

/// Reorders reference keypoints to the model's order: by name when every
/// model keypoint name is present, otherwise by position if the counts agree.
pub fn align_reference(model: &RobotModel, x: KeypointTrajectory) -> CliResult<KeypointTrajectory> {
    let by_name: Option<Vec<usize>> = model
        .keypoints
        .iter()
        .map(|k| x.names.iter().position(|n| *n == k.name))
        .collect();
    match by_name {
        Some(idx) => Ok(KeypointTrajectory {
            names: model.keypoints.iter().map(|k| k.name.clone()).collect(),
            frames: x
                .frames
                .iter()
                .map(|f| retarget_core::KeypointSet {
                    positions: idx.iter().map(|&i| f.positions[i]).collect(),
                })
                .collect(),
            dt: x.dt,
            adjacency: model.adjacency.clone(),
        }),
        None if x.m() == model.m() => Ok(KeypointTrajectory {
            names: model.keypoints.iter().map(|k| k.name.clone()).collect(),
            adjacency: model.adjacency.clone(),
            ..x
        }),
        None => Err(CliError::Mismatch(format!(
            "reference has {} keypoints ({}) but model `{}` has {}",
            x.m(),
            x.names.join(", "),
            model.name,
            model.m()
        ))),
    }
}

pub fn load_inputs(cfg: &PipelineConfig) -> CliResult<Inputs> {
    let model = load_model_file(cfg.model.as_deref())?;
    let raw = parse_keypoints(&cfg.reference, &read_text(&cfg.reference)?)?;
    let reference = align_reference(&model, raw)?;
    let truth = match &cfg.truth_contacts {
        None => None,
        Some(p) => {
            let c = parse_contacts(p, &read_text(p)?)?;
            if c.len() != reference.len() {
                return Err(CliError::Mismatch(format!(
                    "{} has {} frames, reference has {}",
                    p.display(),
                    c.len(),
                    reference.len()
                )));
            }
            Some(c)
        }
    };
    let reference_trajectory = match &cfg.reference_trajectory {
        None => None,
        Some(p) => {
            let t = parse_trajectory(p, &read_text(p)?)?.trajectory;
            if t.len() != reference.len() || t.configurations[0].joints.len() != model.nq() {
                return Err(CliError::Mismatch(format!(
                    "{} does not match the reference length or the model's joint count",
                    p.display()
                )));
            }
            Some(t)
        }
    };
    if cfg.method.is_stochastic() && (reference.dt - cfg.dynamics.control_dt).abs() > 1e-12 {
        return Err(CliError::Config(format!(
            "reference dt {} differs from control dt {}",
            reference.dt, cfg.dynamics.control_dt
        )));
    }
    Ok(Inputs {
        model,
        reference,
        truth,
        reference_trajectory,
    })
}

/// Hash of everything that determines the results except seeds and the
/// output directory.
pub fn run_id(cfg: &PipelineConfig, inputs: &Inputs) -> String {
    let mut keyed = cfg.clone();
    keyed.seeds.clear();
    keyed.out = PathBuf::new();
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&keyed).expect("config serializes"));
    h.update(inputs.model.to_json());
    h.update(keypoints_to_string(&inputs.reference));
    if let Some(t) = &inputs.truth {
        h.update(contacts_to_string(t));
    }
    if let Some(q) = &inputs.reference_trajectory {
        h.update(trajectory_to_string(&inputs.model.name, inputs.model.nq(), q));
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn seed_dir(out: &Path, method: Method, seed: Option<u64>) -> PathBuf {
    let leaf = match seed {
        Some(s) => format!("seed-{s}"),
        None => "single".to_owned(),
    };
    out.join(method.name()).join(leaf)
}

fn tagged(text: String, run_id: &str, seed: Option<u64>) -> String {
    let seed = seed.map_or("none".to_owned(), |s| s.to_string());
    format!("# run {run_id} seed {seed}\n{text}")
}

/// Runs `cfg.method` for every seed and writes the artifacts.
pub fn run(cfg: &PipelineConfig, log: &mut dyn Write) -> CliResult<RunSummary> {
    cfg.check()?;
    let inputs = load_inputs(cfg)?;
    let id = run_id(cfg, &inputs);
    let seeds: Vec<Option<u64>> = if cfg.method.is_stochastic() {
        cfg.seeds.iter().copied().map(Some).collect()
    } else {
        if cfg.seeds != [0] {
            let _ = writeln!(log, "warning: gr is deterministic; ignoring seeds");
        }
        vec![None]
    };
    let mut runs = Vec::new();
    for seed in seeds {
        let dir = seed_dir(&cfg.out, cfg.method, seed);
        let _ = writeln!(
            log,
            "{} seed {}: running",
            cfg.method.name(),
            seed.map_or("-".into(), |s| s.to_string())
        );
        let metrics = run_one(cfg, &inputs, &id, seed, &dir)?;
        let _ = writeln!(
            log,
            "  infeasible {:.1}%  position error {:.4} m  success {}",
            100.0 * metrics.infeasible_fraction.unwrap_or(0.0),
            metrics.mean_position_error,
            metrics.success
        );
        runs.push(SeedRun { dir, seed, metrics });
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.metrics.clone()).collect();
    let aggregate = aggregate_seeds(&reports)?;
    let dir = cfg.out.join(cfg.method.name());
    write_json(
        &dir.join(AGGREGATE),
        &AggregateArtifact {
            run_id: id.clone(),
            method: cfg.method,
            seeds: runs.iter().map(|r| r.seed).collect(),
            aggregate: aggregate.clone(),
        },
    )?;
    Ok(RunSummary {
        run_id: id,
        method: cfg.method,
        dir,
        runs,
        aggregate,
    })
}

fn run_one(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    run_id: &str,
    seed: Option<u64>,
    dir: &Path,
) -> CliResult<MetricsReport> {
    let model = &inputs.model;
    let ik = IkOptions {
        weights: cfg.weights.clone(),
        ..IkOptions::default()
    };
    let started = Instant::now();
    let (q, ik_frames, plan) = match cfg.method {
        Method::Gr => {
            let gr = geometric_retarget(model, &inputs.reference, &ik)?;
            (gr.trajectory, Some(gr.frames), None)
        }
        Method::Idr | Method::Ddr => {
            let mode = if cfg.method == Method::Idr {
                RetargetMode::Indirect
            } else {
                RetargetMode::Direct
            };
            let mut cem = cfg.cem.clone();
            cem.seed = seed.unwrap_or(0);
            let r = dynamic_retarget(model, &inputs.reference, mode, &ik, &cem, &cfg.dynamics)?;
            (
                r.plan.executed(),
                r.geometric.map(|g| g.frames),
                Some(r.plan.diagnostics),
            )
        }
    };
    let wall_time_s = started.elapsed().as_secs_f64();
    let eval = evaluate_trajectory(
        model,
        &q,
        &inputs.reference,
        inputs.truth.as_ref(),
        inputs.reference_trajectory.as_ref(),
        cfg.contact_threshold,
        &cfg.tolerances,
    )?;
    let method = cfg.method;
    let id = run_id.to_owned();
    write_json(
        &dir.join(MANIFEST),
        &Manifest {
            run_id: id.clone(),
            method,
            seed,
            model: model.name.clone(),
            frames: q.len(),
            dt: q.dt,
            config: cfg.clone(),
        },
    )?;
    write_text(
        &dir.join(TRAJECTORY),
        &tagged(trajectory_to_string(&model.name, model.nq(), &q), run_id, seed),
    )?;
    write_text(
        &dir.join(KEYPOINTS),
        &tagged(keypoints_to_string(&eval.keypoints), run_id, seed),
    )?;
    write_text(
        &dir.join(CONTACTS),
        &tagged(contacts_to_string(&eval.feasibility.contacts), run_id, seed),
    )?;
    write_json(
        &dir.join(FEASIBILITY),
        &FeasibilityArtifact {
            run_id: id.clone(),
            method,
            seed,
            report: eval.feasibility,
        },
    )?;
    write_json(
        &dir.join(METRICS),
        &MetricsArtifact {
            run_id: id.clone(),
            method,
            seed,
            metrics: eval.metrics.clone(),
        },
    )?;
    write_json(
        &dir.join(DIAGNOSTICS),
        &DiagnosticsArtifact {
            run_id: id,
            method,
            seed,
            wall_time_s,
            ik: ik_frames,
            plan,
        },
    )?;
    Ok(eval.metrics)
}

/// Re-scores a finished artifact directory from its trajectory file.
pub fn rescore(dir: &Path) -> CliResult<MetricsReport> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let inputs = load_inputs(&manifest.config)?;
    let path = dir.join(TRAJECTORY);
    if !path.exists() {
        return Err(CliError::MissingArtifact(path));
    }
    let q = parse_trajectory(&path, &read_text(&path)?)?.trajectory;
    let eval = evaluate_trajectory(
        &inputs.model,
        &q,
        &inputs.reference,
        inputs.truth.as_ref(),
        inputs.reference_trajectory.as_ref(),
        manifest.config.contact_threshold,
        &manifest.config.tolerances,
    )?;
    Ok(eval.metrics)
}

/// Writes a fixture's reference keypoints, truth contact labels and the
/// authored performer configurations into `dir`.
pub fn export_fixture(kind: FixtureKind, frames: usize, dt: f64, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let f = fixtures::build(kind, frames, dt)?;
    let performer = fixtures::performer_model(fixtures::PERFORMER_SCALE);
    let files = [
        (dir.join("keypoints.txt"), keypoints_to_string(&f.keypoints)),
        (dir.join("truth_contacts.txt"), contacts_to_string(&f.truth_contacts)),
        (
            dir.join("truth_trajectory.txt"),
            trajectory_to_string(&performer.name, performer.nq(), &f.truth),
        ),
    ];
    for (p, text) in &files {
        write_text(p, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Feasibility check of any trajectory file against a model.
pub fn validate_file(
    model: &RobotModel,
    trajectory: &Path,
    contact_threshold: f64,
    tol: &FeasibilityTolerances,
) -> CliResult<FeasibilityReport> {
    let file = parse_trajectory(trajectory, &read_text(trajectory)?)?;
    if file.trajectory.configurations.first().map(|c| c.joints.len()) != Some(model.nq()) {
        return Err(CliError::Mismatch(format!(
            "{} was written for `{}` and does not fit model `{}` ({} joints)",
            trajectory.display(),
            file.model,
            model.name,
            model.nq()
        )));
    }
    Ok(check_trajectory_feasibility(
        model,
        &file.trajectory,
        contact_threshold,
        tol,
    )?)
}

/// Parses a model document and lists every invariant violation.
pub fn check_model_file(path: &Path) -> CliResult<(String, ValidationReport)> {
    let text = read_text(path)?;
    let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let model = doc.into_model().map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let report = validate_model(&model);
    Ok((model.name, report))
}
