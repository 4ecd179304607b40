use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use retarget_cli::pipeline::{MetricsArtifact, AGGREGATE, METRICS, TRAJECTORY};
use retarget_cli::report::Comparison;
use retarget_core::metrics::aggregate_seeds;
use tempfile::TempDir;

fn retarget(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retarget"))
        .args(args)
        .output()
        .expect("spawn retarget")
}

fn ok(args: &[&str]) -> Output {
    let out = retarget(args);
    assert!(
        out.status.success(),
        "retarget {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(kind: &str, frames: usize) -> Self {
        let dir = TempDir::new().unwrap();
        ok(&[
            "fixture",
            kind,
            "--frames",
            &frames.to_string(),
            "--out",
            s(&dir.path().join("fx")),
        ]);
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, method: &str, out: &str, extra: &[&str]) -> Output {
        let reference = self.path("fx/keypoints.txt");
        let truth = self.path("fx/truth_contacts.txt");
        let out = self.path(out);
        let mut args = vec![
            "run",
            "--reference",
            s(&reference),
            "--truth-contacts",
            s(&truth),
            "--method",
            method,
            "--profile",
            "fast",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        retarget(&args)
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let w = Workspace::new("squat", 10);
    for out in ["a", "b"] {
        assert!(w.run("ddr", out, &["--seed", "3"]).status.success());
    }
    let a = std::fs::read(w.path("a/ddr/seed-3").join(TRAJECTORY)).unwrap();
    let b = std::fs::read(w.path("b/ddr/seed-3").join(TRAJECTORY)).unwrap();
    assert_eq!(a, b);
    assert!(w.run("ddr", "c", &["--seed", "4"]).status.success());
    let c = std::fs::read(w.path("c/ddr/seed-4").join(TRAJECTORY)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn report_recomputes_aggregates_from_seed_files() {
    let w = Workspace::new("drift", 10);
    assert!(w.run("ddr", "out", &["--seeds", "0..2"]).status.success());
    assert!(w.run("gr", "out", &[]).status.success());
    let json = w.path("cmp.json");
    let o = ok(&["report", s(&w.path("out")), "--verify", "--json", s(&json)]);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("GR ")), "{table}");
    assert!(table.lines().any(|l| l.starts_with("DDR ")), "{table}");
    let cmp: Comparison = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    let ddr = cmp.rows.iter().find(|r| r.method.name() == "ddr").unwrap();
    assert_eq!(ddr.seeds, vec![Some(0), Some(1), Some(2)]);
    let per_seed: Vec<_> = ddr
        .dirs
        .iter()
        .map(|d| {
            let a: MetricsArtifact = serde_json::from_str(&std::fs::read_to_string(d.join(METRICS)).unwrap()).unwrap();
            a.metrics
        })
        .collect();
    assert_eq!(ddr.aggregate, aggregate_seeds(&per_seed).unwrap());
    let written: retarget_cli::pipeline::AggregateArtifact =
        serde_json::from_str(&std::fs::read_to_string(w.path("out/ddr").join(AGGREGATE)).unwrap()).unwrap();
    assert_eq!(written.aggregate, ddr.aggregate);
}

#[test]
fn single_run_gives_single_row() {
    let w = Workspace::new("squat", 6);
    assert!(w.run("gr", "out", &[]).status.success());
    let o = ok(&["report", s(&w.path("out"))]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
}

#[test]
fn gr_ignores_seeds_and_warns_once() {
    let w = Workspace::new("squat", 6);
    let o = w.run("gr", "out", &["--seeds", "0..4"]);
    assert!(o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.matches("warning:").count(), 1, "{err}");
    assert!(w.path("out/gr/single").join(TRAJECTORY).exists());
    let dirs: Vec<_> = std::fs::read_dir(w.path("out/gr"))
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(dirs.len(), 1);
}

#[test]
fn missing_model_file_is_named() {
    let w = Workspace::new("squat", 6);
    let missing = w.path("no-such-model.json");
    let o = w.run("gr", "out", &["--model", s(&missing)]);
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains(s(&missing)));
}

#[test]
fn config_file_overrides_flags() {
    let w = Workspace::new("squat", 6);
    let cfg = w.path("run.toml");
    std::fs::write(&cfg, "seeds = [2]\n[cem]\npopulation = 20\nelites = 4\n").unwrap();
    let o = w.run("ddr", "out", &["--seed", "1", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(w.path("out/ddr/seed-2").exists());
    assert!(!w.path("out/ddr/seed-1").exists());
    let manifest = std::fs::read_to_string(w.path("out/ddr/seed-2/manifest.json")).unwrap();
    assert!(manifest.contains("\"population\": 20"), "{manifest}");
}

#[test]
fn report_rejects_mixed_models() {
    let w = Workspace::new("squat", 6);
    let model = w.path("other.json");
    ok(&["model", "export", "--out", s(&model)]);
    let text = std::fs::read_to_string(&model)
        .unwrap()
        .replacen("mini-humanoid", "other-humanoid", 1);
    std::fs::write(&model, text).unwrap();
    assert!(w.run("gr", "a", &[]).status.success());
    assert!(w.run("gr", "b", &["--model", s(&model)]).status.success());
    let o = retarget(&["report", s(&w.path("a")), s(&w.path("b"))]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("mini-humanoid") && err.contains("other-humanoid"), "{err}");
}

#[test]
fn plots_are_svg_and_empty_runs_write_nothing() {
    let w = Workspace::new("drift", 8);
    assert!(w.run("gr", "out", &[]).status.success());
    assert!(w.run("ddr", "out", &[]).status.success());
    for kind in ["laplacian_error", "contact_timeline", "cost_curve"] {
        let svg = w.path(&format!("{kind}.svg"));
        ok(&["plot", s(&w.path("out")), "--kind", kind, "--out", s(&svg)]);
        let text = std::fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    }
    let timeline = std::fs::read_to_string(w.path("contact_timeline.svg")).unwrap();
    for lane in ["GR left_foot", "DDR (seed 0) left_foot", "truth left_foot"] {
        assert!(timeline.contains(lane), "{lane}");
    }
    assert_eq!(
        std::fs::read_to_string(w.path("laplacian_error.svg"))
            .unwrap()
            .matches("<polyline")
            .count(),
        2
    );

    let empty = w.path("empty/gr/single");
    std::fs::create_dir_all(&empty).unwrap();
    for f in std::fs::read_dir(w.path("out/gr/single")).unwrap().flatten() {
        std::fs::copy(f.path(), empty.join(f.file_name())).unwrap();
    }
    let kp = std::fs::read_to_string(empty.join("keypoints.txt")).unwrap();
    let header: Vec<&str> = kp.lines().take_while(|l| *l != "data").collect();
    let header = header.join("\n").replace("frames 8", "frames 0");
    std::fs::write(empty.join("keypoints.txt"), format!("{header}\ndata\n")).unwrap();
    let svg = w.path("never.svg");
    let o = retarget(&[
        "plot",
        s(&w.path("empty")),
        "--kind",
        "laplacian_error",
        "--out",
        s(&svg),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("empty"));
    assert!(!svg.exists());
    assert!(
        !retarget(&["plot", s(&w.path("out")), "--kind", "energy", "--out", s(&svg)])
            .status
            .success()
    );
}

#[test]
fn validate_and_model_check() {
    let w = Workspace::new("squat", 6);
    assert!(w.run("gr", "out", &[]).status.success());
    let o = ok(&["validate", s(&w.path("out/gr/single").join(TRAJECTORY))]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("steps infeasible"));

    let model = w.path("m.json");
    ok(&["model", "export", "--out", s(&model)]);
    ok(&["model", "check", s(&model)]);
    let text = std::fs::read_to_string(&model)
        .unwrap()
        .replacen("\"mass\": 10.0", "\"mass\": -1.0", 1);
    std::fs::write(&model, text).unwrap();
    let o = retarget(&["model", "check", s(&model)]);
    assert!(!o.status.success());
}
