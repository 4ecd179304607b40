use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retarget_cli::config::parse_seeds;
use retarget_cli::pipeline::{self, check_model_file, export_fixture, load_model_file, rescore, validate_file};
use retarget_cli::plot::{plot, PlotKind};
use retarget_cli::report::render_table;
use retarget_cli::{report, CliError, CliResult, Method, PipelineConfig, Profile};
use retarget_core::feasibility::{FeasibilityTolerances, DEFAULT_CONTACT_THRESHOLD};
use retarget_core::fixtures::FixtureKind;

#[derive(Parser)]
#[command(name = "retarget", version, about = "Dynamics-aware motion retargeting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retarget a keypoint file with one method over one or more seeds.
    Run(RunArgs),
    /// Compare finished runs; aggregates are recomputed from per-seed files.
    Report {
        /// Run output directories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Re-score every trajectory file and require identical metrics.
        #[arg(long)]
        verify: bool,
    },
    /// Draw an SVG plot of finished runs.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Keypoint shown by `laplacian_error`.
        #[arg(long, default_value = "pelvis")]
        keypoint: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a trajectory file for dynamic feasibility.
    Validate {
        trajectory: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CONTACT_THRESHOLD)]
        contact_threshold: f64,
    },
    /// Model document utilities.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Write a synthetic test motion (keypoints, contact labels, configurations).
    Fixture {
        /// squat, drift or one-foot.
        kind: String,
        #[arg(long, default_value_t = 80)]
        frames: usize,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Parse a model file and list invariant violations.
    Check { path: PathBuf },
    /// Print the bundled mini-humanoid as a model document.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Reference keypoint file.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Robot model file (defaults to the bundled mini-humanoid).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ddr")]
    method: Method,
    /// Ground-truth contact labels.
    #[arg(long)]
    truth_contacts: Option<PathBuf>,
    /// Reference configurations for the joint RMSE.
    #[arg(long)]
    reference_trajectory: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed list: `0..4`, `1,5,9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum, default_value = "standard")]
    profile: Profile,
    /// TOML file; its keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run_command(a: RunArgs) -> CliResult<()> {
    let mut cfg = PipelineConfig::new(a.reference.unwrap_or_default(), a.method, a.out);
    cfg.model = a.model;
    cfg.truth_contacts = a.truth_contacts;
    cfg.reference_trajectory = a.reference_trajectory;
    cfg.cem = a.profile.cem();
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = a.seeds {
        cfg.seeds = parse_seeds(&s).map_err(CliError::Config)?;
    }
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        cfg = cfg.overlay_toml(&text)?;
    }
    if cfg.reference.as_os_str().is_empty() {
        return Err(CliError::Config(
            "no reference keypoint file (use --reference or `reference` in the config)".into(),
        ));
    }
    let summary = pipeline::run(&cfg, &mut std::io::stderr())?;
    println!(
        "run {} ({}) -> {}",
        summary.run_id,
        summary.method.name(),
        summary.dir.display()
    );
    Ok(())
}

fn main_inner(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Run(a) => run_command(a)?,
        Command::Report { dirs, json, verify } => {
            let c = report(&dirs)?;
            if verify {
                for row in &c.rows {
                    for d in &row.dirs {
                        let fresh = rescore(d)?;
                        let stored: pipeline::MetricsArtifact = serde_json::from_str(
                            &std::fs::read_to_string(d.join(pipeline::METRICS)).map_err(|source| CliError::Io {
                                path: d.join(pipeline::METRICS),
                                source,
                            })?,
                        )
                        .map_err(|e| CliError::Mismatch(e.to_string()))?;
                        if fresh != stored.metrics {
                            return Err(CliError::Mismatch(format!(
                                "{}: stored metrics differ from the trajectory file\n  stored   {:?}\n  rescored {:?}",
                                d.display(),
                                stored.metrics,
                                fresh
                            )));
                        }
                    }
                }
            }
            print!("{}", render_table(&c));
            if let Some(p) = json {
                let text = serde_json::to_string_pretty(&c).expect("comparison serializes") + "\n";
                std::fs::write(&p, text).map_err(|source| CliError::Io { path: p, source })?;
            }
        }
        Command::Plot {
            dirs,
            kind,
            keypoint,
            out,
        } => {
            plot(&dirs, kind, &keypoint, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Validate {
            trajectory,
            model,
            contact_threshold,
        } => {
            let model = load_model_file(model.as_deref())?;
            let r = validate_file(
                &model,
                &trajectory,
                contact_threshold,
                &FeasibilityTolerances::default(),
            )?;
            let bad = r.verdicts.iter().filter(|v| !v.feasible).count();
            println!(
                "{}: {} of {} steps infeasible ({:.1}%), {} indeterminate, worst residual {:.3e} at step {}",
                trajectory.display(),
                bad,
                r.verdicts.len(),
                100.0 * r.infeasible_fraction,
                r.indeterminate,
                r.worst_residual,
                r.worst_timestep
            );
        }
        Command::Model {
            command: ModelCommand::Check { path },
        } => {
            let (name, r) = check_model_file(&path)?;
            if r.is_valid() {
                println!("{name}: ok");
            } else {
                for v in &r.violations {
                    println!("{name}: {}: {}", v.rule, v.message);
                }
                return Ok(false);
            }
        }
        Command::Model {
            command: ModelCommand::Export { out },
        } => {
            let doc = retarget_core::reference::mini_humanoid().to_document();
            let text = serde_json::to_string_pretty(&doc).expect("model documents serialize") + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|source| CliError::Io { path: p, source })?,
                None => print!("{text}"),
            }
        }
        Command::Fixture { kind, frames, dt, out } => {
            let kind = FixtureKind::parse(&kind)?;
            for p in export_fixture(kind, frames, dt, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
