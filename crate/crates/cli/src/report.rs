//! Cross-method comparison recomputed from per-seed artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use retarget_core::metrics::{aggregate_seeds, AggregateReport, MeanStd};
use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::pipeline::{Manifest, MetricsArtifact, MANIFEST, METRICS};
use crate::{read_json, CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub run_id: String,
    pub model: String,
    pub seeds: Vec<Option<u64>>,
    pub dirs: Vec<PathBuf>,
    pub aggregate: AggregateReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<MethodRow>,
}

/// Every artifact directory (one holding a manifest) under `root`, sorted.
pub fn find_artifact_dirs(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.exists() {
        return Err(CliError::MissingArtifact(root.to_path_buf()));
    }
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(MANIFEST).is_file() {
            found.push(dir);
            continue;
        }
        let entries = std::fs::read_dir(&dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        for e in entries.flatten() {
            if e.path().is_dir() {
                stack.push(e.path());
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Groups the artifact sets found under `roots` by method and run and
/// aggregates each group's per-seed metrics.
pub fn report(roots: &[PathBuf]) -> CliResult<Comparison> {
    let mut sets: Vec<(PathBuf, Manifest, MetricsArtifact)> = Vec::new();
    for root in roots {
        for dir in find_artifact_dirs(root)? {
            let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
            let metrics: MetricsArtifact = read_json(&dir.join(METRICS))?;
            if metrics.run_id != manifest.run_id || metrics.seed != manifest.seed {
                return Err(CliError::Mismatch(format!(
                    "{}: metrics belong to run {} seed {:?}, manifest to run {} seed {:?}",
                    dir.display(),
                    metrics.run_id,
                    metrics.seed,
                    manifest.run_id,
                    manifest.seed
                )));
            }
            if !sets.iter().any(|(d, _, _)| *d == dir) {
                sets.push((dir, manifest, metrics));
            }
        }
    }
    if sets.is_empty() {
        return Err(CliError::MissingArtifact(
            roots.first().cloned().unwrap_or_default().join(MANIFEST),
        ));
    }
    let model = &sets[0].1.model;
    if let Some((dir, m, _)) = sets.iter().find(|(_, m, _)| m.model != *model) {
        return Err(CliError::Mismatch(format!(
            "cannot compare runs on different models: `{model}` vs `{}` ({})",
            m.model,
            dir.display()
        )));
    }
    let frames = sets[0].1.frames;
    if let Some((dir, m, _)) = sets.iter().find(|(_, m, _)| m.frames != frames) {
        return Err(CliError::Mismatch(format!(
            "cannot compare runs of different lengths: {frames} vs {} frames ({})",
            m.frames,
            dir.display()
        )));
    }
    let mut rows = Vec::new();
    for method in Method::ALL {
        let mut ids: Vec<&str> = sets
            .iter()
            .filter(|(_, m, _)| m.method == method)
            .map(|(_, m, _)| m.run_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            let group: Vec<&(PathBuf, Manifest, MetricsArtifact)> = sets
                .iter()
                .filter(|(_, m, _)| m.method == method && m.run_id == id)
                .collect();
            let reports: Vec<_> = group.iter().map(|(_, _, a)| a.metrics.clone()).collect();
            rows.push(MethodRow {
                method,
                run_id: id.to_owned(),
                model: model.clone(),
                seeds: group.iter().map(|(_, m, _)| m.seed).collect(),
                dirs: group.iter().map(|(d, _, _)| d.clone()).collect(),
                aggregate: aggregate_seeds(&reports)?,
            });
        }
    }
    Ok(Comparison { rows })
}

fn pct(v: Option<MeanStd>) -> String {
    match v {
        Some(v) => format!("{:.1} ± {:.1}", 100.0 * v.mean, 100.0 * v.std),
        None => "-".into(),
    }
}

fn metres(v: Option<MeanStd>) -> String {
    match v {
        Some(v) => format!("{:.4} ± {:.4}", v.mean, v.std),
        None => "-".into(),
    }
}

/// Plain-text table of a comparison.
pub fn render_table(c: &Comparison) -> String {
    let header = [
        "method",
        "seeds",
        "infeasible %",
        "contact err %",
        "success",
        "position err m",
        "laplacian err m",
        "joint rmse rad",
        "foot slip m",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &c.rows {
        let a = &r.aggregate;
        rows.push(vec![
            r.method.name().to_uppercase(),
            a.seeds.to_string(),
            pct(a.infeasible_fraction),
            pct(a.contact_error_rate),
            format!("{:.0}%", 100.0 * a.success_rate),
            metres(Some(a.mean_position_error)),
            metres(Some(a.mean_laplacian_error)),
            metres(a.joints_rmse),
            metres(Some(a.foot_slip)),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        if n == 0 {
            writeln!(
                out,
                "{}",
                widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")
            )
            .unwrap();
        }
    }
    out
}
